#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dcaseg/manifest.hpp"
#include "dcaseg/sampler.hpp"

namespace dcaseg {

// Summary statistics of a dataset, input to plan().
struct Fingerprint {
  int median_height = 0;
  int median_width = 0;
  std::array<double, 3> intensity_p005{};  // per-channel 0.5 percentile
  std::array<double, 3> intensity_p995{};  // per-channel 99.5 percentile
  int num_domains = 0;
  int num_samples = 0;
};

// Decodes every sample; percentiles are taken over a deterministic
// subsample of at most max_pixels pooled pixels.
Fingerprint compute_fingerprint(const DatasetManifest& manifest,
                                size_t max_pixels = 1000000);

// Network and training configuration. Field defaults follow the training
// recipe this project reproduces; plan() derives the architecture fields
// from a Fingerprint.
struct PlanConfig {
  int patch_size = 64;
  int depth = 4;             // number of pooling stages
  int base_channels = 32;
  int max_channels = 320;
  int in_channels = 3;
  int num_classes = 2;
  int num_domains = 1;

  int batch_size = 2;
  int minibatches_per_epoch = 250;
  int epochs = 1000;             // 2500 when dcac_enabled
  double initial_lr = 0.01;
  double momentum = 0.99;
  double poly_exponent = 0.9;
  double ema_alpha = 0.9;
  double domain_loss_weight = 1.0;
  double grad_clip_norm = 12.0;  // global-norm gradient clip; 0 disables
  bool dcac_enabled = false;
  uint64_t seed = 0;

  // dynamic-head structure
  int predictor_hidden = 128;
  int dynamic_kernel_size = 1;
  int dac_layers = 1;
  int cac_layers = 2;
  bool stop_gradient_domain_encoding = false;
  std::string selection_rule = "auto";  // auto | dice | mean

  // sampling / loss knobs
  double p_foreground = 1.0 / 3.0;
  double dice_epsilon = 1e-5;
  AugmentConfig augment;

  // Encoder channel progression: base doubling per stage, capped.
  std::vector<int> stage_channels() const;
  int bottleneck_size() const { return patch_size >> depth; }
  void validate() const;

  std::string to_json() const;                   // pretty, stable key order
  static PlanConfig from_json(const std::string& text);
};

void save_plan(const PlanConfig& plan, const std::filesystem::path& path);
PlanConfig load_plan(const std::filesystem::path& path);

// Derives patch size, depth and channel widths from the fingerprint, then
// applies overrides (a JSON object whose keys are PlanConfig fields).
PlanConfig plan(const Fingerprint& fp, const std::string& overrides_json = "{}");

// Named presets: "desk" shrinks the run to CPU scale, "full" keeps the
// defaults above.
void apply_preset(PlanConfig& plan, const std::string& preset);

}  // namespace dcaseg
