#include "dcaseg/plan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dcaseg/png_io.hpp"
#include "json.hpp"

namespace dcaseg {

using nlohmann::json;

namespace {

// Lower median: element at index (n-1)/2 of the sorted sequence.
int lower_median(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

double percentile(const std::vector<float>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  double pos = q / 100.0 * (sorted.size() - 1);
  size_t idx = static_cast<size_t>(std::llround(pos));
  return sorted[std::min(idx, sorted.size() - 1)];
}

int floor_pow2(int v) {
  int p = 1;
  while (2 * p <= v) p *= 2;
  return p;
}

}  // namespace

Fingerprint compute_fingerprint(const DatasetManifest& manifest, size_t max_pixels) {
  if (manifest.samples.empty()) throw std::runtime_error("empty manifest");

  std::vector<int> heights, widths;
  size_t total_pixels = 0;
  for (const Sample& s : manifest.samples) {
    auto [h, w] = read_png_size(s.image_path);
    heights.push_back(h);
    widths.push_back(w);
    total_pixels += static_cast<size_t>(h) * w;
  }

  // deterministic stride over pooled pixels
  size_t stride = std::max<size_t>(1, total_pixels / max_pixels);
  std::array<std::vector<float>, 3> pooled;
  size_t counter = 0;
  for (const Sample& s : manifest.samples) {
    Image img = read_image_png(s.image_path);
    for (size_t p = 0; p < img.pixels(); ++p, ++counter) {
      if (counter % stride != 0) continue;
      for (int ch = 0; ch < 3; ++ch) pooled[ch].push_back(img.data[ch * img.pixels() + p]);
    }
  }

  Fingerprint fp;
  fp.median_height = lower_median(heights);
  fp.median_width = lower_median(widths);
  for (int ch = 0; ch < 3; ++ch) {
    std::sort(pooled[ch].begin(), pooled[ch].end());
    fp.intensity_p005[ch] = percentile(pooled[ch], 0.5);
    fp.intensity_p995[ch] = percentile(pooled[ch], 99.5);
  }
  fp.num_domains = manifest.num_domains();
  fp.num_samples = static_cast<int>(manifest.samples.size());
  return fp;
}

std::vector<int> PlanConfig::stage_channels() const {
  std::vector<int> ch(depth + 1);
  int c = base_channels;
  for (int s = 0; s <= depth; ++s) {
    ch[s] = std::min(c, max_channels);
    c *= 2;
  }
  return ch;
}

void PlanConfig::validate() const {
  if (depth < 1) throw std::runtime_error("plan depth must be >= 1");
  if (patch_size % (1 << depth) != 0)
    throw std::runtime_error("patch_size must be divisible by 2^depth");
  if (bottleneck_size() < 4)
    throw std::runtime_error("bottleneck spatial size must be >= 4");
  if (num_classes < 2) throw std::runtime_error("num_classes must be >= 2");
  if (num_domains < 1) throw std::runtime_error("num_domains must be >= 1");
  if (batch_size < 1) throw std::runtime_error("batch_size must be >= 1");
  if (dynamic_kernel_size < 1 || dynamic_kernel_size % 2 == 0)
    throw std::runtime_error("dynamic_kernel_size must be odd and >= 1");
}

namespace {

json plan_to_json_obj(const PlanConfig& p) {
  json j;
  j["patch_size"] = p.patch_size;
  j["depth"] = p.depth;
  j["base_channels"] = p.base_channels;
  j["max_channels"] = p.max_channels;
  j["in_channels"] = p.in_channels;
  j["num_classes"] = p.num_classes;
  j["num_domains"] = p.num_domains;
  j["batch_size"] = p.batch_size;
  j["minibatches_per_epoch"] = p.minibatches_per_epoch;
  j["epochs"] = p.epochs;
  j["initial_lr"] = p.initial_lr;
  j["momentum"] = p.momentum;
  j["poly_exponent"] = p.poly_exponent;
  j["ema_alpha"] = p.ema_alpha;
  j["domain_loss_weight"] = p.domain_loss_weight;
  j["grad_clip_norm"] = p.grad_clip_norm;
  j["dcac_enabled"] = p.dcac_enabled;
  j["seed"] = p.seed;
  j["predictor_hidden"] = p.predictor_hidden;
  j["dynamic_kernel_size"] = p.dynamic_kernel_size;
  j["dac_layers"] = p.dac_layers;
  j["cac_layers"] = p.cac_layers;
  j["stop_gradient_domain_encoding"] = p.stop_gradient_domain_encoding;
  j["selection_rule"] = p.selection_rule;
  j["p_foreground"] = p.p_foreground;
  j["dice_epsilon"] = p.dice_epsilon;
  j["augment"] = {{"p_mirror_h", p.augment.p_mirror_h},
                  {"p_mirror_v", p.augment.p_mirror_v},
                  {"p_rot90", p.augment.p_rot90},
                  {"p_intensity", p.augment.p_intensity},
                  {"intensity_lo", p.augment.intensity_lo},
                  {"intensity_hi", p.augment.intensity_hi}};
  return j;
}

void apply_json_to_plan(const json& j, PlanConfig& p) {
  auto set_int = [&](const char* k, int& v) { if (j.contains(k)) v = j.at(k).get<int>(); };
  auto set_dbl = [&](const char* k, double& v) { if (j.contains(k)) v = j.at(k).get<double>(); };
  auto set_bool = [&](const char* k, bool& v) { if (j.contains(k)) v = j.at(k).get<bool>(); };
  set_int("patch_size", p.patch_size);
  set_int("depth", p.depth);
  set_int("base_channels", p.base_channels);
  set_int("max_channels", p.max_channels);
  set_int("in_channels", p.in_channels);
  set_int("num_classes", p.num_classes);
  set_int("num_domains", p.num_domains);
  set_int("batch_size", p.batch_size);
  set_int("minibatches_per_epoch", p.minibatches_per_epoch);
  set_int("epochs", p.epochs);
  set_dbl("initial_lr", p.initial_lr);
  set_dbl("momentum", p.momentum);
  set_dbl("poly_exponent", p.poly_exponent);
  set_dbl("ema_alpha", p.ema_alpha);
  set_dbl("domain_loss_weight", p.domain_loss_weight);
  set_dbl("grad_clip_norm", p.grad_clip_norm);
  set_bool("dcac_enabled", p.dcac_enabled);
  if (j.contains("seed")) p.seed = j.at("seed").get<uint64_t>();
  set_int("predictor_hidden", p.predictor_hidden);
  set_int("dynamic_kernel_size", p.dynamic_kernel_size);
  set_int("dac_layers", p.dac_layers);
  set_int("cac_layers", p.cac_layers);
  set_bool("stop_gradient_domain_encoding", p.stop_gradient_domain_encoding);
  if (j.contains("selection_rule")) p.selection_rule = j.at("selection_rule").get<std::string>();
  set_dbl("p_foreground", p.p_foreground);
  set_dbl("dice_epsilon", p.dice_epsilon);
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    auto set = [&](const char* k, double& v) { if (a.contains(k)) v = a.at(k).get<double>(); };
    set("p_mirror_h", p.augment.p_mirror_h);
    set("p_mirror_v", p.augment.p_mirror_v);
    set("p_rot90", p.augment.p_rot90);
    set("p_intensity", p.augment.p_intensity);
    set("intensity_lo", p.augment.intensity_lo);
    set("intensity_hi", p.augment.intensity_hi);
  }
}

}  // namespace

std::string PlanConfig::to_json() const { return plan_to_json_obj(*this).dump(2); }

PlanConfig PlanConfig::from_json(const std::string& text) {
  PlanConfig p;
  apply_json_to_plan(json::parse(text), p);
  return p;
}

void save_plan(const PlanConfig& plan, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plan: " + path.string());
  out << plan.to_json() << "\n";
}

PlanConfig load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return PlanConfig::from_json(text);
}

PlanConfig plan(const Fingerprint& fp, const std::string& overrides_json) {
  const int min_dim = std::min(fp.median_height, fp.median_width);
  if (floor_pow2(min_dim) < 32) {
    throw std::runtime_error("fingerprint smaller than minimum patch 32");
  }

  PlanConfig p;
  p.patch_size = std::min(512, floor_pow2(min_dim));
  int d = 0;
  while (d < 5 && (p.patch_size >> (d + 1)) >= 4) ++d;
  p.depth = d;
  p.base_channels = 32;
  p.max_channels = 320;
  p.num_domains = std::max(1, fp.num_domains);

  json overrides = json::parse(overrides_json);
  apply_json_to_plan(overrides, p);
  // default training length depends on the dcac switch unless overridden
  if (!overrides.contains("epochs")) p.epochs = p.dcac_enabled ? 2500 : 1000;
  p.validate();
  return p;
}

void apply_preset(PlanConfig& plan, const std::string& preset) {
  if (preset == "full" || preset.empty()) return;
  if (preset == "desk") {
    plan.patch_size = 64;
    plan.depth = 4;
    plan.base_channels = 16;
    plan.minibatches_per_epoch = 20;
    plan.epochs = 60;
    return;
  }
  throw std::runtime_error("unknown preset: " + preset);
}

}  // namespace dcaseg
