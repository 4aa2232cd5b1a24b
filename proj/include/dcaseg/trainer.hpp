#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "dcaseg/folds.hpp"
#include "dcaseg/losses.hpp"
#include "dcaseg/manifest.hpp"
#include "dcaseg/metrics.hpp"
#include "dcaseg/model.hpp"
#include "dcaseg/optimizer.hpp"
#include "dcaseg/plan.hpp"

namespace dcaseg {

struct TrainState {
  int epoch = 0;
  double lr = 0.0;
  double ema_dice = 0.0;
  double ema_domain_acc = 0.0;
  bool ema_initialized = false;
  double best_score = 0.0;
  bool has_best = false;
};

// EMA update plus checkpoint selection. The selection score is the Dice EMA
// for the baseline and the mean of Dice and domain-accuracy EMAs when the
// dynamic heads are active (selection_rule overrides). Returns true when the
// score strictly exceeds the previous best.
bool update_selection(TrainState& state, double val_dice, double val_domain_acc,
                      const PlanConfig& plan);

// One epoch: minibatches_per_epoch iterations of
// sample -> augment -> forward -> loss -> backward -> optimizer step,
// at a fixed learning rate. Throws "divergence" on non-finite loss.
LossBreakdown train_epoch(SegModel<float>& model, SgdNesterov<float>& opt,
                          ParamSet<float>& params, const PatchSampler& sampler,
                          const PlanConfig& plan, double lr, Rng& rng);

// Patch-level validation: deterministic center crop per sample, Dice of the
// argmax prediction against the cropped mask, plus domain accuracy when the
// dynamic heads are active.
struct ValidationResult {
  double dice = 0.0;
  double domain_acc = 0.0;
};
ValidationResult validate(SegModel<float>& model, const DatasetManifest& manifest,
                          const std::vector<int>& indices, const PlanConfig& plan);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown losses;
  bool has_val = false;
  double val_dice = 0.0;
  double ema_dice = 0.0;
  double ema_domain_acc = 0.0;
  bool selected = false;
};

struct FitOptions {
  std::vector<int> train_indices;  // empty: all samples
  std::vector<int> val_indices;    // empty: no validation, keep final weights
  std::filesystem::path out_dir;
  uint64_t seed = 0;
};

struct FitResult {
  std::filesystem::path checkpoint_path;
  std::filesystem::path log_path;
  TrainState state;
  std::vector<EpochLog> history;
};

// Full training run with per-epoch CSV logging and EMA-guided checkpoint
// selection. Deterministic given (plan, manifest, options.seed).
FitResult fit(const PlanConfig& plan, const DatasetManifest& manifest,
              const FitOptions& options);

struct CrossvalResult {
  std::vector<std::filesystem::path> checkpoints;
  std::vector<MetricsReport> fold_reports;
  FoldSplit split;
};

// k-fold cross-validation: per fold trains on the complement, validates on
// the fold, and writes checkpoint + log + full-inference fold report.
CrossvalResult run_crossval(const DatasetManifest& manifest, const PlanConfig& plan,
                            int k, uint64_t seed, const std::filesystem::path& out_dir);

struct ExperimentProtocol {
  enum class Kind { cross_domain, in_domain_holdout, full_train };
  Kind kind = Kind::cross_domain;
  DatasetManifest source;
  std::optional<DatasetManifest> eval_set;         // cross_domain target
  std::optional<DatasetManifest> domain_eval_set;  // held-out seen-domain samples
  int holdout_per_domain = 10;
  uint64_t seed = 0;
  bool run_baseline = true;
  bool run_dcac = true;
};

struct ExperimentVariantResult {
  std::string name;  // "baseline" | "dcac"
  std::filesystem::path checkpoint;
  std::optional<MetricsReport> report;
  double domain_accuracy = -1.0;  // dcac only, -1 when not measured
};

struct ExperimentResult {
  std::vector<ExperimentVariantResult> variants;
  std::filesystem::path summary_path;
};

// Experiment protocols: cross_domain trains on the source manifest and
// evaluates on a disjoint target manifest; in_domain_holdout removes
// holdout_per_domain samples per domain for selection and final scoring;
// full_train consumes everything and reports training curves only.
ExperimentResult run_experiment(const ExperimentProtocol& protocol, const PlanConfig& plan,
                                const std::filesystem::path& out_dir);

}  // namespace dcaseg
