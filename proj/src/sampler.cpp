#include "dcaseg/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "dcaseg/png_io.hpp"

namespace dcaseg {

namespace {

// Symmetric zero-pad up to at least (min_h, min_w).
void pad_to(Image& img, Mask& mask, int min_h, int min_w) {
  if (img.h >= min_h && img.w >= min_w) return;
  int nh = std::max(img.h, min_h), nw = std::max(img.w, min_w);
  int top = (nh - img.h) / 2, left = (nw - img.w) / 2;
  Image pimg(nh, nw, img.c, 0.f);
  for (int ch = 0; ch < img.c; ++ch)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) pimg.at(ch, y + top, x + left) = img.at(ch, y, x);
  Mask pmask(nh, nw, 0);
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) pmask.at(y + top, x + left) = mask.at(y, x);
  img = std::move(pimg);
  mask = std::move(pmask);
}

void mirror_h(Patch& p) {
  for (int ch = 0; ch < p.image.c; ++ch)
    for (int y = 0; y < p.image.h; ++y)
      for (int x = 0; x < p.image.w / 2; ++x)
        std::swap(p.image.at(ch, y, x), p.image.at(ch, y, p.image.w - 1 - x));
  for (int y = 0; y < p.mask.h; ++y)
    for (int x = 0; x < p.mask.w / 2; ++x)
      std::swap(p.mask.at(y, x), p.mask.at(y, p.mask.w - 1 - x));
}

void mirror_v(Patch& p) {
  for (int ch = 0; ch < p.image.c; ++ch)
    for (int y = 0; y < p.image.h / 2; ++y)
      for (int x = 0; x < p.image.w; ++x)
        std::swap(p.image.at(ch, y, x), p.image.at(ch, p.image.h - 1 - y, x));
  for (int y = 0; y < p.mask.h / 2; ++y)
    for (int x = 0; x < p.mask.w; ++x)
      std::swap(p.mask.at(y, x), p.mask.at(p.mask.h - 1 - y, x));
}

// 90 degrees counterclockwise, square patches only.
void rot90_once(Patch& p) {
  const int n = p.image.h;
  Image img(n, n, p.image.c);
  for (int ch = 0; ch < p.image.c; ++ch)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) img.at(ch, n - 1 - x, y) = p.image.at(ch, y, x);
  Mask mask(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) mask.at(n - 1 - x, y) = p.mask.at(y, x);
  p.image = std::move(img);
  p.mask = std::move(mask);
}

}  // namespace

PatchSampler::PatchSampler(const DatasetManifest& manifest, int patch_size,
                           double p_foreground)
    : PatchSampler(manifest, std::vector<int>(), patch_size, p_foreground) {}

PatchSampler::PatchSampler(const DatasetManifest& manifest, std::vector<int> indices,
                           int patch_size, double p_foreground)
    : manifest_(manifest),
      indices_(std::move(indices)),
      patch_size_(patch_size),
      p_foreground_(p_foreground) {
  if (indices_.empty()) {
    indices_.resize(manifest.samples.size());
    std::iota(indices_.begin(), indices_.end(), 0);
  }
  if (indices_.empty()) throw std::runtime_error("empty manifest");
  if (patch_size_ < 1) throw std::runtime_error("patch size must be positive");
}

const PatchSampler::CacheEntry& PatchSampler::entry(int manifest_index) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = cache_.find(manifest_index);
  if (it != cache_.end()) return *it->second;

  const Sample& s = manifest_.samples.at(manifest_index);
  auto e = std::make_unique<CacheEntry>();
  e->image = read_image_png(s.image_path);
  e->mask = read_mask_png(s.mask_path);
  if (e->image.h != e->mask.h || e->image.w != e->mask.w) {
    throw std::runtime_error("mask/image shape mismatch: " + s.image_path.string());
  }
  pad_to(e->image, e->mask, patch_size_, patch_size_);
  for (int y = 0; y < e->mask.h; ++y)
    for (int x = 0; x < e->mask.w; ++x)
      if (e->mask.at(y, x) != 0) e->fg_pixels.push_back(y * e->mask.w + x);
  auto [pos, inserted] = cache_.emplace(manifest_index, std::move(e));
  return *pos->second;
}

Patch PatchSampler::crop(const CacheEntry& e, int domain_id, int oy, int ox) const {
  const int P = patch_size_;
  Patch p;
  p.domain_id = domain_id;
  p.image = Image(P, P, e.image.c);
  p.mask = Mask(P, P);
  for (int ch = 0; ch < e.image.c; ++ch)
    for (int y = 0; y < P; ++y)
      for (int x = 0; x < P; ++x) p.image.at(ch, y, x) = e.image.at(ch, oy + y, ox + x);
  for (int y = 0; y < P; ++y)
    for (int x = 0; x < P; ++x) p.mask.at(y, x) = e.mask.at(oy + y, ox + x);
  return p;
}

std::vector<Patch> PatchSampler::sample_minibatch(int batch_size, Rng& rng) const {
  const int P = patch_size_;
  std::vector<Patch> batch;
  batch.reserve(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    int mi = indices_[rng.uniform_int(0, static_cast<int64_t>(indices_.size()) - 1)];
    const CacheEntry& e = entry(mi);
    const int max_oy = e.image.h - P, max_ox = e.image.w - P;

    bool want_fg = rng.bernoulli(p_foreground_);
    int oy, ox;
    if (want_fg && !e.fg_pixels.empty()) {
      int flat = e.fg_pixels[rng.uniform_int(0, static_cast<int64_t>(e.fg_pixels.size()) - 1)];
      int fy = flat / e.mask.w, fx = flat % e.mask.w;
      // center the window on the chosen pixel, clamped into bounds; the
      // pixel always stays inside the crop
      oy = std::clamp(fy - P / 2, 0, max_oy);
      ox = std::clamp(fx - P / 2, 0, max_ox);
    } else {
      oy = static_cast<int>(rng.uniform_int(0, max_oy));
      ox = static_cast<int>(rng.uniform_int(0, max_ox));
    }
    batch.push_back(crop(e, manifest_.samples[mi].domain_id, oy, ox));
  }
  return batch;
}

Patch PatchSampler::center_patch(int index) const {
  int mi = indices_.at(index);
  const CacheEntry& e = entry(mi);
  int oy = (e.image.h - patch_size_) / 2;
  int ox = (e.image.w - patch_size_) / 2;
  return crop(e, manifest_.samples[mi].domain_id, oy, ox);
}

std::vector<Patch> augment(std::vector<Patch> batch, const AugmentConfig& cfg, Rng& rng) {
  for (Patch& p : batch) {
    if (rng.bernoulli(cfg.p_mirror_h)) mirror_h(p);
    if (rng.bernoulli(cfg.p_mirror_v)) mirror_v(p);
    if (rng.bernoulli(cfg.p_rot90)) {
      if (p.image.h != p.image.w)
        throw std::runtime_error("rot90 augmentation needs square patches");
      int quarter_turns = static_cast<int>(rng.uniform_int(1, 3));
      for (int q = 0; q < quarter_turns; ++q) rot90_once(p);
    }
    if (rng.bernoulli(cfg.p_intensity)) {
      float s = static_cast<float>(rng.uniform(cfg.intensity_lo, cfg.intensity_hi));
      for (float& v : p.image.data) v = std::clamp(v * s, 0.f, 1.f);
    }
  }
  return batch;
}

}  // namespace dcaseg
