#include "dcaseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "dcaseg/checkpoint.hpp"
#include "dcaseg/inference.hpp"
#include "dcaseg/png_io.hpp"
#include "json.hpp"

namespace dcaseg {

using nlohmann::json;

bool update_selection(TrainState& state, double val_dice, double val_domain_acc,
                      const PlanConfig& plan) {
  const double a = plan.ema_alpha;
  if (!state.ema_initialized) {
    state.ema_dice = val_dice;
    state.ema_domain_acc = val_domain_acc;
    state.ema_initialized = true;
  } else {
    state.ema_dice = a * state.ema_dice + (1.0 - a) * val_dice;
    state.ema_domain_acc = a * state.ema_domain_acc + (1.0 - a) * val_domain_acc;
  }

  bool use_mean = plan.dcac_enabled;
  if (plan.selection_rule == "dice") use_mean = false;
  if (plan.selection_rule == "mean") use_mean = true;
  const double score =
      use_mean ? 0.5 * (state.ema_dice + state.ema_domain_acc) : state.ema_dice;

  if (!state.has_best || score > state.best_score) {
    state.best_score = score;
    state.has_best = true;
    return true;
  }
  return false;
}

LossBreakdown train_epoch(SegModel<float>& model, SgdNesterov<float>& opt,
                          ParamSet<float>& params, const PatchSampler& sampler,
                          const PlanConfig& plan, double lr, Rng& rng) {
  LossBreakdown sum;
  for (int it = 0; it < plan.minibatches_per_epoch; ++it) {
    std::vector<Patch> batch = sampler.sample_minibatch(plan.batch_size, rng);
    batch = augment(std::move(batch), plan.augment, rng);

    Tensor<float> x = batch_from_patches<float>(batch);
    std::vector<Mask> masks;
    std::vector<int> domains;
    for (const Patch& p : batch) {
      masks.push_back(p.mask);
      domains.push_back(p.domain_id);
    }

    zero_grads(params);
    auto out = model.forward(x);
    SegLossResult<float> seg =
        seg_loss(out.logits, masks, static_cast<float>(plan.dice_epsilon), true);

    double dom = 0.0;
    Tensor<float> dprobs;
    if (plan.dcac_enabled) {
      dom = domain_loss(out.domain_probs, domains, &dprobs);
      const float lambda = static_cast<float>(plan.domain_loss_weight);
      for (float& v : dprobs.v) v *= lambda;
    }

    LossBreakdown step = LossBreakdown::make(seg.dice_loss, seg.ce_loss, dom,
                                             plan.domain_loss_weight);
    if (!std::isfinite(step.total)) throw std::runtime_error("divergence: non-finite loss");

    model.backward(seg.dlogits, dprobs);
    clip_grad_norm(params, plan.grad_clip_norm);
    opt.step(params, lr);
    sum += step;
  }
  return sum.scaled(1.0 / plan.minibatches_per_epoch);
}

ValidationResult validate(SegModel<float>& model, const DatasetManifest& manifest,
                          const std::vector<int>& indices, const PlanConfig& plan) {
  if (indices.empty()) throw std::runtime_error("validate: empty validation set");
  PatchSampler sampler(manifest, indices, plan.patch_size, plan.p_foreground);

  ValidationResult r;
  size_t correct_domains = 0;
  const int chunk = std::max(plan.batch_size, 4);
  for (size_t start = 0; start < indices.size(); start += chunk) {
    const size_t end = std::min(indices.size(), start + chunk);
    std::vector<Patch> patches;
    for (size_t i = start; i < end; ++i)
      patches.push_back(sampler.center_patch(static_cast<int>(i)));
    Tensor<float> x = batch_from_patches<float>(patches);
    auto out = model.forward(x);
    Tensor<float> probs = softmax_channels(out.logits);

    const int hw = probs.hw();
    for (size_t i = 0; i < patches.size(); ++i) {
      Mask pred(probs.h, probs.w);
      for (int p = 0; p < hw; ++p) {
        int best = 0;
        float bv = probs.sample(static_cast<int>(i))[p];
        for (int c = 1; c < probs.c; ++c) {
          const float v = probs.sample(static_cast<int>(i))[static_cast<size_t>(c) * hw + p];
          if (v > bv) {
            bv = v;
            best = c;
          }
        }
        pred.data[p] = static_cast<uint8_t>(best);
      }
      r.dice += dice_score(pred, patches[i].mask);
      if (plan.dcac_enabled) {
        const float* dp = out.domain_probs.sample(static_cast<int>(i));
        int best = 0;
        for (int k = 1; k < out.domain_probs.c; ++k)
          if (dp[k] > dp[best]) best = k;
        correct_domains += (best == patches[i].domain_id);
      }
    }
  }
  r.dice /= static_cast<double>(indices.size());
  r.domain_acc = plan.dcac_enabled
                     ? static_cast<double>(correct_domains) / indices.size()
                     : 0.0;
  return r;
}

namespace {

void write_log_header(std::ofstream& log) {
  log << "epoch,lr,dice_loss,ce_loss,domain_loss,val_dice,ema_dice,ema_domain_acc,selected\n";
}

void write_log_row(std::ofstream& log, const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,", e.epoch, e.lr,
                e.losses.dice_loss, e.losses.ce_loss, e.losses.domain_loss);
  log << buf;
  if (e.has_val) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,", e.val_dice, e.ema_dice,
                  e.ema_domain_acc);
    log << buf;
  } else {
    log << ",,,";
  }
  log << (e.selected ? 1 : 0) << "\n";
}

}  // namespace

FitResult fit(const PlanConfig& plan, const DatasetManifest& manifest,
              const FitOptions& options) {
  plan.validate();
  std::filesystem::create_directories(options.out_dir);

  std::vector<int> train_idx = options.train_indices;
  if (train_idx.empty()) {
    train_idx.resize(manifest.samples.size());
    std::iota(train_idx.begin(), train_idx.end(), 0);
  }
  PatchSampler sampler(manifest, train_idx, plan.patch_size, plan.p_foreground);

  Rng root(options.seed);
  Rng init_rng = root.fork(0x1417);
  Rng data_rng = root.fork(0xDA7A);

  SegModel<float> model(plan);
  model.init(init_rng);
  ParamSet<float> params = model.params();
  SgdNesterov<float> opt(plan.momentum);

  FitResult result;
  result.checkpoint_path = options.out_dir / "checkpoint.bin";
  result.log_path = options.out_dir / "train_log.csv";
  std::ofstream log(result.log_path);
  if (!log) throw std::runtime_error("cannot write log: " + result.log_path.string());
  write_log_header(log);

  TrainState state;
  const bool has_val = !options.val_indices.empty();
  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    state.epoch = epoch;
    state.lr = poly_lr(epoch, plan.epochs, plan.initial_lr, plan.poly_exponent);

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = state.lr;
    entry.losses = train_epoch(model, opt, params, sampler, plan, state.lr, data_rng);

    if (has_val) {
      ValidationResult val = validate(model, manifest, options.val_indices, plan);
      entry.has_val = true;
      entry.val_dice = val.dice;
      entry.selected = update_selection(state, val.dice, val.domain_acc, plan);
      entry.ema_dice = state.ema_dice;
      entry.ema_domain_acc = state.ema_domain_acc;
      if (entry.selected) save_checkpoint(result.checkpoint_path, plan, params);
    }
    write_log_row(log, entry);
    result.history.push_back(entry);
  }
  if (!has_val) save_checkpoint(result.checkpoint_path, plan, params);
  result.state = state;
  return result;
}

namespace {

// Full-inference evaluation of a set of manifest samples with an ensemble.
MetricsReport evaluate_manifest(const std::vector<PatchPredictor>& predictors,
                                const DatasetManifest& manifest,
                                const std::vector<int>& indices, const PlanConfig& plan,
                                const std::string& protocol) {
  std::vector<Mask> preds, gts;
  std::vector<std::string> ids;
  std::vector<int> domains;
  for (int idx : indices) {
    const Sample& s = manifest.samples[idx];
    Image img = read_image_png(s.image_path);
    Mask gt = read_mask_png(s.mask_path);
    PredictionMap probs = ensemble(predictors, img, plan.patch_size, plan.num_classes);
    preds.push_back(mask_from_probs(probs));
    gts.push_back(std::move(gt));
    ids.push_back(s.image_path.stem().string());
    domains.push_back(s.domain_id);
  }
  return evaluate_masks(preds, gts, ids, domains, manifest.domain_names, protocol);
}

double evaluate_domain_accuracy(SegModel<float>& model, const DatasetManifest& manifest,
                                const PlanConfig& plan) {
  std::vector<int> all(manifest.samples.size());
  std::iota(all.begin(), all.end(), 0);
  ValidationResult r = validate(model, manifest, all, plan);
  return r.domain_acc;
}

}  // namespace

CrossvalResult run_crossval(const DatasetManifest& manifest, const PlanConfig& plan,
                            int k, uint64_t seed, const std::filesystem::path& out_dir) {
  CrossvalResult result;
  result.split = make_folds(manifest, k, seed);
  std::filesystem::create_directories(out_dir);

  Rng root(seed);
  json summary;
  summary["k"] = k;
  summary["folds"] = json::array();
  for (int fold = 0; fold < k; ++fold) {
    FitOptions opts;
    opts.train_indices = result.split.complement_indices(fold);
    opts.val_indices = result.split.fold_indices(fold);
    opts.out_dir = out_dir / ("fold_" + std::to_string(fold));
    opts.seed = root.fork(0xC0DE + fold).seed();
    if (opts.train_indices.empty() || opts.val_indices.empty())
      throw std::runtime_error("fold " + std::to_string(fold) + " has an empty split");

    FitResult fit_result = fit(plan, manifest, opts);
    result.checkpoints.push_back(fit_result.checkpoint_path);

    // fold report: full inference with the selected checkpoint
    PlanConfig loaded_plan;
    auto models = load_fold_models({fit_result.checkpoint_path}, &loaded_plan);
    std::vector<PatchPredictor> predictors;
    predictors.push_back(make_model_predictor(*models[0]));
    MetricsReport report = evaluate_manifest(predictors, manifest, opts.val_indices, plan,
                                             "crossval_fold_" + std::to_string(fold));
    write_report(report, opts.out_dir / "report.csv", opts.out_dir / "report.json");
    result.fold_reports.push_back(report);

    json fold_js;
    fold_js["fold"] = fold;
    // run-dir-relative so runs stay relocatable and byte-reproducible
    fold_js["checkpoint"] = "fold_" + std::to_string(fold) + "/checkpoint.bin";
    fold_js["mean_seg_score"] = report.mean_seg;
    fold_js["mean_dice"] = report.mean_dice;
    fold_js["best_selection_score"] = fit_result.state.best_score;
    summary["folds"].push_back(fold_js);
  }

  double mean_seg = 0.0;
  for (const MetricsReport& r : result.fold_reports) mean_seg += r.mean_seg;
  summary["mean_seg_score"] = mean_seg / k;
  std::ofstream out(out_dir / "crossval_summary.json");
  out << summary.dump(2) << "\n";
  return result;
}

namespace {

std::set<std::string> canonical_paths(const DatasetManifest& m) {
  std::set<std::string> out;
  for (const Sample& s : m.samples) {
    std::error_code ec;
    auto canon = std::filesystem::weakly_canonical(s.image_path, ec);
    out.insert(ec ? s.image_path.string() : canon.string());
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentProtocol& protocol, const PlanConfig& plan,
                                const std::filesystem::path& out_dir) {
  using Kind = ExperimentProtocol::Kind;
  std::filesystem::create_directories(out_dir);

  if (protocol.kind == Kind::cross_domain) {
    if (!protocol.eval_set) throw std::runtime_error("cross_domain needs an eval manifest");
    std::set<std::string> src = canonical_paths(protocol.source);
    for (const std::string& p : canonical_paths(*protocol.eval_set)) {
      if (src.count(p))
        throw std::runtime_error("cross_domain source and eval manifests overlap: " + p);
    }
  }

  // deterministic holdout selection for the in-domain protocol
  std::vector<int> train_idx, holdout_idx;
  if (protocol.kind == Kind::in_domain_holdout) {
    const int K = protocol.source.num_domains();
    std::vector<std::vector<int>> by_domain(K);
    for (size_t i = 0; i < protocol.source.samples.size(); ++i)
      by_domain[protocol.source.samples[i].domain_id].push_back(static_cast<int>(i));
    Rng rng = Rng(protocol.seed).fork(0x401D);
    for (int d = 0; d < K; ++d) {
      std::vector<int>& idx = by_domain[d];
      if (static_cast<int>(idx.size()) <= protocol.holdout_per_domain)
        throw std::runtime_error("domain " + std::to_string(d) +
                                 " too small for the requested holdout");
      for (size_t i = idx.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(idx[i - 1], idx[j]);
      }
      for (size_t i = 0; i < idx.size(); ++i) {
        if (static_cast<int>(i) < protocol.holdout_per_domain)
          holdout_idx.push_back(idx[i]);
        else
          train_idx.push_back(idx[i]);
      }
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(holdout_idx.begin(), holdout_idx.end());
  }

  ExperimentResult result;
  json summary;
  summary["kind"] = protocol.kind == Kind::cross_domain       ? "cross_domain"
                    : protocol.kind == Kind::in_domain_holdout ? "in_domain_holdout"
                                                               : "full_train";

  std::vector<std::pair<std::string, bool>> variants;
  if (protocol.run_baseline) variants.emplace_back("baseline", false);
  if (protocol.run_dcac) variants.emplace_back("dcac", true);

  for (const auto& [name, dcac_on] : variants) {
    PlanConfig vplan = plan;
    vplan.dcac_enabled = dcac_on;
    vplan.num_domains = protocol.source.num_domains();
    vplan.validate();

    FitOptions opts;
    opts.out_dir = out_dir / name;
    opts.seed = Rng(protocol.seed).fork(dcac_on ? 0xDCAC : 0xBA5E).seed();

    // validation split per protocol
    std::vector<int> eval_indices;
    const DatasetManifest* eval_manifest = nullptr;
    if (protocol.kind == Kind::cross_domain) {
      if (protocol.domain_eval_set) {
        opts.val_indices.resize(protocol.domain_eval_set->samples.size());
        std::iota(opts.val_indices.begin(), opts.val_indices.end(), 0);
      }
      eval_manifest = &*protocol.eval_set;
    } else if (protocol.kind == Kind::in_domain_holdout) {
      opts.train_indices = train_idx;
      opts.val_indices = holdout_idx;
      eval_manifest = &protocol.source;
      eval_indices = holdout_idx;
    }

    // cross_domain validates against the separate seen-domain manifest, so
    // fit gets a merged manifest with the validation block appended
    DatasetManifest fit_manifest = protocol.source;
    if (protocol.kind == Kind::cross_domain && protocol.domain_eval_set) {
      const int offset = static_cast<int>(fit_manifest.samples.size());
      for (const Sample& s : protocol.domain_eval_set->samples)
        fit_manifest.samples.push_back(s);
      opts.train_indices.resize(offset);
      std::iota(opts.train_indices.begin(), opts.train_indices.end(), 0);
      for (int& v : opts.val_indices) v += offset;
    }

    FitResult fit_result = fit(vplan, fit_manifest, opts);

    ExperimentVariantResult var;
    var.name = name;
    var.checkpoint = fit_result.checkpoint_path;

    PlanConfig loaded_plan;
    auto models = load_fold_models({fit_result.checkpoint_path}, &loaded_plan);

    if (protocol.kind != Kind::full_train && eval_manifest) {
      if (eval_indices.empty()) {
        eval_indices.resize(eval_manifest->samples.size());
        std::iota(eval_indices.begin(), eval_indices.end(), 0);
      }
      std::vector<PatchPredictor> predictors;
      predictors.push_back(make_model_predictor(*models[0]));
      MetricsReport report = evaluate_manifest(predictors, *eval_manifest, eval_indices,
                                               vplan, summary["kind"].get<std::string>());
      write_report(report, opts.out_dir / "report.csv", opts.out_dir / "report.json");
      var.report = report;
      summary[name]["mean_seg_score"] = report.mean_seg;
      summary[name]["mean_dice"] = report.mean_dice;
      summary[name]["mean_jaccard"] = report.mean_jaccard;
    } else {
      summary[name]["final_train_total_loss"] = fit_result.history.back().losses.total;
    }

    if (dcac_on && protocol.domain_eval_set) {
      var.domain_accuracy =
          evaluate_domain_accuracy(*models[0], *protocol.domain_eval_set, vplan);
      summary[name]["domain_accuracy"] = var.domain_accuracy;
    } else if (dcac_on && protocol.kind == Kind::in_domain_holdout) {
      DatasetManifest holdout = subset(protocol.source, holdout_idx);
      var.domain_accuracy = evaluate_domain_accuracy(*models[0], holdout, vplan);
      summary[name]["domain_accuracy"] = var.domain_accuracy;
    }

    summary[name]["checkpoint"] = name + "/checkpoint.bin";
    result.variants.push_back(std::move(var));
  }

  result.summary_path = out_dir / "experiment_summary.json";
  std::ofstream out(result.summary_path);
  out << summary.dump(2) << "\n";
  return result;
}

}  // namespace dcaseg
