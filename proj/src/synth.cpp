#include "dcaseg/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dcaseg/png_io.hpp"
#include "dcaseg/rng.hpp"

namespace dcaseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Blob {
  double cx, cy;    // center, pixels
  double a, b;      // semi-axes, pixels
  double phi;       // rotation
};

Mask rasterize_blobs(const std::vector<Blob>& blobs, int size) {
  Mask m(size, size, 0);
  for (const Blob& bl : blobs) {
    const double c = std::cos(bl.phi), s = std::sin(bl.phi);
    // bounding box keeps rasterization cheap for small blobs
    const double r = std::max(bl.a, bl.b);
    int y0 = std::max(0, static_cast<int>(std::floor(bl.cy - r)));
    int y1 = std::min(size - 1, static_cast<int>(std::ceil(bl.cy + r)));
    int x0 = std::max(0, static_cast<int>(std::floor(bl.cx - r)));
    int x1 = std::min(size - 1, static_cast<int>(std::ceil(bl.cx + r)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double dx = x + 0.5 - bl.cx, dy = y + 0.5 - bl.cy;
        double u = (dx * c + dy * s) / bl.a;
        double v = (-dx * s + dy * c) / bl.b;
        if (u * u + v * v <= 1.0) m.at(y, x) = 1;
      }
    }
  }
  return m;
}

// Rotation of RGB space around the gray axis (1,1,1)/sqrt(3).
std::array<double, 9> hue_rotation_matrix(double deg) {
  const double th = deg * kPi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double ax = 1.0 / std::sqrt(3.0);
  std::array<double, 9> r{};
  // Rodrigues formula for unit axis (ax, ax, ax)
  const double omc = 1.0 - c;
  r[0] = c + ax * ax * omc;
  r[1] = ax * ax * omc - ax * s;
  r[2] = ax * ax * omc + ax * s;
  r[3] = ax * ax * omc + ax * s;
  r[4] = c + ax * ax * omc;
  r[5] = ax * ax * omc - ax * s;
  r[6] = ax * ax * omc - ax * s;
  r[7] = ax * ax * omc + ax * s;
  r[8] = c + ax * ax * omc;
  return r;
}

}  // namespace

SynthSpec SynthSpec::with_defaults(int num_domains, int samples_per_domain,
                                   int image_size) {
  SynthSpec spec;
  spec.num_domains = num_domains;
  spec.samples_per_domain = samples_per_domain;
  spec.image_size = image_size;
  spec.appearance.clear();
  for (int d = 0; d < num_domains; ++d) {
    DomainAppearance ap;
    ap.hue_deg = 40.0 * d;
    ap.texture_freq = 6.0 * std::pow(1.8, d);
    ap.texture_duty = 0.5 / std::pow(2.0, d);  // 0.5, 0.25, 0.125, ...
    ap.noise_level = 0.01 + 0.02 * d;
    spec.appearance.push_back(ap);
  }
  return spec;
}

void SynthSpec::validate() const {
  if (num_domains < 2) throw std::runtime_error("synth spec needs num_domains >= 2");
  if (image_size < 32) throw std::runtime_error("synth spec needs image_size >= 32");
  if (samples_per_domain < 1) throw std::runtime_error("samples_per_domain must be >= 1");
  if (blob_count_min < 1 || blob_count_max < blob_count_min)
    throw std::runtime_error("invalid blob count range");
  if (static_cast<int>(appearance.size()) != num_domains)
    throw std::runtime_error("appearance list must have one entry per domain");
}

DatasetManifest synth_generate(const SynthSpec& spec, uint64_t seed,
                               const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir)) {
    throw std::runtime_error("unwritable directory: " + out_dir.string());
  }

  const int S = spec.image_size;
  Rng root(seed);

  DatasetManifest manifest;
  manifest.seed = seed;
  for (int d = 0; d < spec.num_domains; ++d) {
    manifest.domain_names.push_back("domain_" + std::to_string(d));
  }

  for (int d = 0; d < spec.num_domains; ++d) {
    const DomainAppearance& ap = spec.appearance[d];
    const std::array<double, 9> rot = hue_rotation_matrix(ap.hue_deg);
    for (int i = 0; i < spec.samples_per_domain; ++i) {
      // Geometry and appearance use separate per-sample streams. The
      // geometry generator is the same for every domain, so mask shape
      // distributions match across domains by construction.
      const uint64_t key = (static_cast<uint64_t>(d) << 24) | static_cast<uint64_t>(i);
      Rng geo = root.fork((0x6E0ull << 48) | key);
      Rng app = root.fork((0xA11ull << 48) | key);

      int nblobs = static_cast<int>(geo.uniform_int(spec.blob_count_min, spec.blob_count_max));
      std::vector<Blob> blobs(nblobs);
      for (Blob& b : blobs) {
        b.cx = geo.uniform(0.15, 0.85) * S;
        b.cy = geo.uniform(0.15, 0.85) * S;
        b.a = geo.uniform(S / 10.0, S / 4.0);
        b.b = geo.uniform(S / 10.0, S / 4.0);
        b.phi = geo.uniform(0.0, kPi);
      }
      Mask mask = rasterize_blobs(blobs, S);

      // Base palette: light textured background, darker smooth foreground.
      // The luminance contrast is hue-invariant, so segmentation transfers
      // across domains while per-domain hue remains a confound.
      double jb = app.uniform(-0.03, 0.03);
      double jf = app.uniform(-0.03, 0.03);
      std::array<double, 3> bg = {0.82 + jb, 0.64 + jb, 0.74 + jb};
      std::array<double, 3> fg = {0.40 + jf, 0.22 + jf, 0.34 + jf};

      double tex_angle = app.uniform(0.0, kPi);
      double tex_phase = app.uniform(0.0, 2.0 * kPi);
      double ca = std::cos(tex_angle), sa = std::sin(tex_angle);
      // second stripe system at 1/8 frequency: stays visible in the deepest
      // downsampled feature maps, so every encoder stage carries the domain
      double lo_angle = app.uniform(0.0, kPi);
      double lo_phase = app.uniform(0.0, 2.0 * kPi);
      double cb = std::cos(lo_angle), sb = std::sin(lo_angle);

      // two-level stripe waveform: bright fraction = texture_duty, zero mean
      const double duty = std::clamp(ap.texture_duty, 0.02, 0.98);
      const double threshold = std::cos(kPi * duty);
      const double lvl_hi = 1.0 - duty, lvl_lo = -duty;
      // chroma texture direction, nearly luminance-free: stripes do not
      // interfere with the foreground/background brightness contrast that
      // carries the segmentation signal
      const double tex_dir[3] = {0.76, -0.61, -0.15};

      Image img(S, S, 3);
      for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
          bool is_fg = mask.at(y, x) != 0;
          const std::array<double, 3>& base = is_fg ? fg : bg;
          double tex_amp = is_fg ? 0.10 : 0.16;
          double s = std::sin(2.0 * kPi * ap.texture_freq * (x * ca + y * sa) / S +
                              tex_phase);
          double s_lo = std::sin(2.0 * kPi * (ap.texture_freq / 8.0) *
                                     (x * cb + y * sb) / S +
                                 lo_phase);
          double t = tex_amp * (s > threshold ? lvl_hi : lvl_lo) * 2.0 +
                     0.6 * tex_amp * (s_lo > threshold ? lvl_hi : lvl_lo) * 2.0;
          double rgb[3];
          for (int ch = 0; ch < 3; ++ch) rgb[ch] = base[ch] + t * tex_dir[ch];
          // domain appearance: hue rotation, then noise
          double r = rot[0] * rgb[0] + rot[1] * rgb[1] + rot[2] * rgb[2];
          double g = rot[3] * rgb[0] + rot[4] * rgb[1] + rot[5] * rgb[2];
          double b = rot[6] * rgb[0] + rot[7] * rgb[1] + rot[8] * rgb[2];
          double out[3] = {r, g, b};
          for (int ch = 0; ch < 3; ++ch) {
            double v = out[ch] + ap.noise_level * app.normal();
            img.at(ch, y, x) = static_cast<float>(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
          }
        }
      }

      char stem[64];
      std::snprintf(stem, sizeof(stem), "d%d_s%04d", d, i);
      std::filesystem::path img_path = out_dir / (std::string(stem) + ".png");
      std::filesystem::path mask_path = out_dir / (std::string(stem) + "_mask.png");
      write_image_png(img_path, img);
      write_mask_png(mask_path, mask);

      Sample s;
      s.image_path = img_path;
      s.mask_path = mask_path;
      s.domain_id = d;
      manifest.samples.push_back(std::move(s));
    }
  }

  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace dcaseg
