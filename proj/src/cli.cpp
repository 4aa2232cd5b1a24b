#include "dcaseg/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"
#include "dcaseg/checkpoint.hpp"
#include "dcaseg/inference.hpp"
#include "dcaseg/metrics.hpp"
#include "dcaseg/plan.hpp"
#include "dcaseg/png_io.hpp"
#include "dcaseg/synth.hpp"
#include "dcaseg/trainer.hpp"
#include "json.hpp"

namespace dcaseg {

namespace {

using nlohmann::json;

// Output directory resolution: explicit --out wins; otherwise a timestamped
// run directory under $DCASEG_OUT (or ./runs).
std::filesystem::path resolve_run_dir(const std::string& out_flag,
                                      const std::string& subcommand) {
  if (!out_flag.empty()) return out_flag;
  const char* env = std::getenv("DCASEG_OUT");
  std::filesystem::path base = env ? env : "runs";
  std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::localtime(&now));
  return base / (subcommand + "-" + stamp);
}

void echo_config(const std::filesystem::path& run_dir, const json& config) {
  std::filesystem::create_directories(run_dir);
  std::ofstream out(run_dir / "config.resolved.json");
  out << config.dump(2) << "\n";
}

// Parses "key=value"; the value is read as JSON when possible, else as a
// bare string.
json parse_set_flags(const std::vector<std::string>& sets) {
  json overrides = json::object();
  for (const std::string& kv : sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects key=value, got: " + kv);
    json value = json::parse(kv.substr(eq + 1), nullptr, false);
    overrides[kv.substr(0, eq)] = value.is_discarded() ? json(kv.substr(eq + 1)) : value;
  }
  return overrides;
}

PlanConfig plan_from_flags(const std::string& plan_path, const std::string& preset,
                           const std::vector<std::string>& sets, bool dcac,
                           uint64_t seed) {
  PlanConfig plan;
  if (!plan_path.empty()) {
    plan = load_plan(plan_path);
    if (!preset.empty()) apply_preset(plan, preset);
  } else {
    apply_preset(plan, preset.empty() ? "desk" : preset);
  }
  if (dcac) plan.dcac_enabled = true;
  plan.seed = seed;
  if (!sets.empty()) {
    json merged = json::parse(plan.to_json());
    merged.merge_patch(parse_set_flags(sets));
    plan = PlanConfig::from_json(merged.dump());
  }
  plan.validate();
  return plan;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"dcaseg: cross-domain segmentation with dynamic domain/content-adaptive heads"};
  app.require_subcommand(1);

  int jobs = 1;
  app.add_option("--jobs", jobs, "worker threads (1 = bit-reproducible single-thread mode)");

  // ---- synth ----
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic multi-domain dataset");
  int sy_domains = 4, sy_per = 10, sy_size = 64, sy_blob_min = 1, sy_blob_max = 4;
  uint64_t sy_seed = 0;
  std::string sy_out;
  bool sy_seed_set = false;
  synth_cmd->add_option("--domains", sy_domains, "number of domains")->capture_default_str();
  synth_cmd->add_option("--per-domain", sy_per, "samples per domain")->capture_default_str();
  synth_cmd->add_option("--size", sy_size, "square image size")->capture_default_str();
  synth_cmd->add_option("--blob-min", sy_blob_min, "min blobs per image")->capture_default_str();
  synth_cmd->add_option("--blob-max", sy_blob_max, "max blobs per image")->capture_default_str();
  synth_cmd->add_option("--seed", sy_seed, "generator seed (required)")
      ->each([&](const std::string&) { sy_seed_set = true; });
  synth_cmd->add_option("--out", sy_out, "output directory");

  // ---- plan ----
  auto* plan_cmd = app.add_subcommand("plan", "fingerprint a dataset and derive a plan");
  std::string pl_manifest, pl_out, pl_preset;
  std::vector<std::string> pl_sets;
  bool pl_dcac = false;
  uint64_t pl_seed = 0;
  plan_cmd->add_option("--manifest", pl_manifest, "dataset manifest JSON")->required();
  plan_cmd->add_option("--out", pl_out, "output directory");
  plan_cmd->add_option("--preset", pl_preset, "desk | full");
  plan_cmd->add_option("--set", pl_sets, "plan override key=value (repeatable)");
  plan_cmd->add_flag("--dcac", pl_dcac, "enable the dynamic adaptive heads");
  plan_cmd->add_option("--seed", pl_seed, "seed recorded in the plan");

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train one model on a full manifest");
  std::string tr_manifest, tr_plan, tr_preset, tr_out;
  std::vector<std::string> tr_sets;
  bool tr_dcac = false, tr_seed_set = false;
  uint64_t tr_seed = 0;
  train_cmd->add_option("--manifest", tr_manifest, "dataset manifest JSON")->required();
  train_cmd->add_option("--plan", tr_plan, "plan JSON path (else --preset)");
  train_cmd->add_option("--preset", tr_preset, "desk | full");
  train_cmd->add_option("--set", tr_sets, "plan override key=value (repeatable)");
  train_cmd->add_flag("--dcac", tr_dcac, "enable the dynamic adaptive heads");
  train_cmd->add_option("--seed", tr_seed, "training seed (required)")
      ->each([&](const std::string&) { tr_seed_set = true; });
  train_cmd->add_option("--out", tr_out, "output directory");

  // ---- crossval ----
  auto* cv_cmd = app.add_subcommand("crossval", "k-fold cross-validation training");
  std::string cv_manifest, cv_plan, cv_preset, cv_out;
  std::vector<std::string> cv_sets;
  bool cv_dcac = false, cv_seed_set = false;
  int cv_k = 5;
  uint64_t cv_seed = 0;
  cv_cmd->add_option("--manifest", cv_manifest, "dataset manifest JSON")->required();
  cv_cmd->add_option("--plan", cv_plan, "plan JSON path (else --preset)");
  cv_cmd->add_option("--preset", cv_preset, "desk | full");
  cv_cmd->add_option("--set", cv_sets, "plan override key=value (repeatable)");
  cv_cmd->add_flag("--dcac", cv_dcac, "enable the dynamic adaptive heads");
  cv_cmd->add_option("--k", cv_k, "number of folds")->capture_default_str();
  cv_cmd->add_option("--seed", cv_seed, "crossval seed (required)")
      ->each([&](const std::string&) { cv_seed_set = true; });
  cv_cmd->add_option("--out", cv_out, "output directory");

  // ---- infer ----
  auto* infer_cmd = app.add_subcommand("infer", "predict masks for manifest images");
  std::string in_manifest, in_out, in_ckpt_dir;
  std::vector<std::string> in_ckpts;
  double in_threshold = 0.5;
  bool in_no_tta = false, in_save_probs = false;
  double in_step_frac = 0.5, in_sigma_frac = 0.125;
  infer_cmd->add_option("--manifest", in_manifest, "manifest of images to predict")->required();
  infer_cmd->add_option("--checkpoint", in_ckpts, "checkpoint path (repeatable for ensembling)");
  infer_cmd->add_option("--checkpoints-dir", in_ckpt_dir,
                        "directory holding fold_*/checkpoint.bin");
  infer_cmd->add_option("--threshold", in_threshold, "foreground threshold (binary)")
      ->capture_default_str();
  infer_cmd->add_flag("--no-tta", in_no_tta, "disable mirror test-time augmentation");
  infer_cmd->add_flag("--save-probs", in_save_probs, "write float32 probability maps");
  infer_cmd->add_option("--step-frac", in_step_frac, "tile step as a fraction of patch size")
      ->capture_default_str();
  infer_cmd->add_option("--sigma-frac", in_sigma_frac, "gaussian sigma as a fraction of patch")
      ->capture_default_str();
  infer_cmd->add_option("--out", in_out, "output directory");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "score predicted masks against a manifest");
  std::string ev_manifest, ev_pred_dir, ev_out;
  bool ev_pooled = false;
  eval_cmd->add_option("--manifest", ev_manifest, "ground-truth manifest")->required();
  eval_cmd->add_option("--pred-dir", ev_pred_dir, "directory with <stem>_pred.png files")
      ->required();
  eval_cmd->add_flag("--pooled", ev_pooled, "additionally report globally pooled metrics");
  eval_cmd->add_option("--out", ev_out, "output directory");

  // ---- experiment ----
  auto* exp_cmd = app.add_subcommand("experiment", "run a training/evaluation protocol");
  std::string ex_kind, ex_manifest, ex_eval, ex_domain_eval, ex_plan, ex_preset, ex_out;
  std::vector<std::string> ex_sets;
  std::string ex_models = "baseline,dcac";
  int ex_holdout = 10;
  uint64_t ex_seed = 0;
  bool ex_seed_set = false;
  exp_cmd->add_option("--kind", ex_kind, "cross_domain | in_domain_holdout | full_train")
      ->required();
  exp_cmd->add_option("--manifest", ex_manifest, "source (training) manifest")->required();
  exp_cmd->add_option("--eval-manifest", ex_eval, "target manifest (cross_domain)");
  exp_cmd->add_option("--domain-eval-manifest", ex_domain_eval,
                      "held-out seen-domain manifest for selection/domain accuracy");
  exp_cmd->add_option("--plan", ex_plan, "plan JSON path (else --preset)");
  exp_cmd->add_option("--preset", ex_preset, "desk | full");
  exp_cmd->add_option("--set", ex_sets, "plan override key=value (repeatable)");
  exp_cmd->add_option("--models", ex_models, "comma list: baseline,dcac")->capture_default_str();
  exp_cmd->add_option("--holdout-per-domain", ex_holdout, "in_domain_holdout size per domain")
      ->capture_default_str();
  exp_cmd->add_option("--seed", ex_seed, "protocol seed (required)")
      ->each([&](const std::string&) { ex_seed_set = true; });
  exp_cmd->add_option("--out", ex_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    set_num_threads(jobs);
    Eigen::setNbThreads(jobs > 0 ? jobs : 0);

    if (synth_cmd->parsed()) {
      if (!sy_seed_set) throw std::runtime_error("synth requires --seed");
      std::filesystem::path run_dir = resolve_run_dir(sy_out, "synth");
      SynthSpec spec = SynthSpec::with_defaults(sy_domains, sy_per, sy_size);
      spec.blob_count_min = sy_blob_min;
      spec.blob_count_max = sy_blob_max;
      echo_config(run_dir, {{"subcommand", "synth"},
                            {"domains", sy_domains},
                            {"per_domain", sy_per},
                            {"size", sy_size},
                            {"seed", sy_seed},
                            {"out", run_dir.string()}});
      DatasetManifest m = synth_generate(spec, sy_seed, run_dir);
      std::cout << "wrote " << m.samples.size() << " samples to "
                << (run_dir / "manifest.json").string() << "\n";
      return 0;
    }

    if (plan_cmd->parsed()) {
      std::filesystem::path run_dir = resolve_run_dir(pl_out, "plan");
      DatasetManifest manifest = load_manifest(pl_manifest);
      Fingerprint fp = compute_fingerprint(manifest);
      json overrides = parse_set_flags(pl_sets);
      if (pl_dcac) overrides["dcac_enabled"] = true;
      overrides["seed"] = pl_seed;
      PlanConfig p = plan(fp, overrides.dump());
      if (!pl_preset.empty()) {
        apply_preset(p, pl_preset);
        p.validate();
      }
      echo_config(run_dir, {{"subcommand", "plan"},
                            {"manifest", pl_manifest},
                            {"preset", pl_preset},
                            {"out", run_dir.string()}});
      save_plan(p, run_dir / "plan.json");
      std::cout << "plan written to " << (run_dir / "plan.json").string() << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      if (!tr_seed_set) throw std::runtime_error("train requires --seed");
      std::filesystem::path run_dir = resolve_run_dir(tr_out, "train");
      DatasetManifest manifest = load_manifest(tr_manifest);
      PlanConfig p = plan_from_flags(tr_plan, tr_preset, tr_sets, tr_dcac, tr_seed);
      p.num_domains = manifest.num_domains();
      echo_config(run_dir, {{"subcommand", "train"},
                            {"manifest", tr_manifest},
                            {"plan", json::parse(p.to_json())},
                            {"seed", tr_seed},
                            {"out", run_dir.string()}});
      FitOptions opts;
      opts.out_dir = run_dir;
      opts.seed = tr_seed;
      FitResult r = fit(p, manifest, opts);
      std::cout << "checkpoint: " << r.checkpoint_path.string() << "\n";
      return 0;
    }

    if (cv_cmd->parsed()) {
      if (!cv_seed_set) throw std::runtime_error("crossval requires --seed");
      std::filesystem::path run_dir = resolve_run_dir(cv_out, "crossval");
      DatasetManifest manifest = load_manifest(cv_manifest);
      PlanConfig p = plan_from_flags(cv_plan, cv_preset, cv_sets, cv_dcac, cv_seed);
      p.num_domains = manifest.num_domains();
      echo_config(run_dir, {{"subcommand", "crossval"},
                            {"manifest", cv_manifest},
                            {"k", cv_k},
                            {"plan", json::parse(p.to_json())},
                            {"seed", cv_seed},
                            {"out", run_dir.string()}});
      CrossvalResult r = run_crossval(manifest, p, cv_k, cv_seed, run_dir);
      std::cout << r.checkpoints.size() << " fold checkpoints under " << run_dir.string()
                << "\n";
      return 0;
    }

    if (infer_cmd->parsed()) {
      std::filesystem::path run_dir = resolve_run_dir(in_out, "infer");
      std::vector<std::filesystem::path> ckpts;
      for (const std::string& c : in_ckpts) ckpts.push_back(c);
      if (!in_ckpt_dir.empty()) {
        for (int fold = 0;; ++fold) {
          std::filesystem::path p =
              std::filesystem::path(in_ckpt_dir) / ("fold_" + std::to_string(fold)) /
              "checkpoint.bin";
          if (!std::filesystem::exists(p)) break;
          ckpts.push_back(p);
        }
      }
      if (ckpts.empty()) throw std::runtime_error("no checkpoints given");

      DatasetManifest manifest = load_manifest(in_manifest, /*validate_files=*/false);
      PlanConfig p;
      auto models = load_fold_models(ckpts, &p);
      std::vector<PatchPredictor> predictors;
      for (auto& m : models) predictors.push_back(make_model_predictor(*m));

      InferenceOptions opts;
      opts.tta = !in_no_tta;
      opts.step = std::max(1, static_cast<int>(p.patch_size * in_step_frac));
      opts.sigma_scale = in_sigma_frac;

      echo_config(run_dir, {{"subcommand", "infer"},
                            {"manifest", in_manifest},
                            {"checkpoints", ckpts.size()},
                            {"threshold", in_threshold},
                            {"tta", opts.tta},
                            {"out", run_dir.string()}});

      for (const Sample& s : manifest.samples) {
        Image img = read_image_png(s.image_path);
        PredictionMap probs = ensemble(predictors, img, p.patch_size, p.num_classes, opts);
        Mask mask = mask_from_probs(probs, in_threshold);
        const std::string stem = s.image_path.stem().string();
        write_mask_png(run_dir / (stem + "_pred.png"), mask);
        if (in_save_probs) {
          std::vector<std::string> class_names = {"background", "tumor"};
          if (p.num_classes != 2) {
            class_names.clear();
            for (int c = 0; c < p.num_classes; ++c)
              class_names.push_back("class_" + std::to_string(c));
          }
          write_probability_map(probs, run_dir / (stem + "_probs.f32"),
                                run_dir / (stem + "_probs.json"), class_names);
        }
      }
      std::cout << manifest.samples.size() << " predictions under " << run_dir.string()
                << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      std::filesystem::path run_dir = resolve_run_dir(ev_out, "eval");
      DatasetManifest manifest = load_manifest(ev_manifest);
      std::vector<Mask> preds, gts;
      std::vector<std::string> ids;
      std::vector<int> domains;
      for (const Sample& s : manifest.samples) {
        const std::string stem = s.image_path.stem().string();
        std::filesystem::path pred_path =
            std::filesystem::path(ev_pred_dir) / (stem + "_pred.png");
        if (!std::filesystem::exists(pred_path))
          throw std::runtime_error("missing prediction: " + pred_path.string());
        preds.push_back(read_mask_png(pred_path));
        gts.push_back(read_mask_png(s.mask_path));
        ids.push_back(stem);
        domains.push_back(s.domain_id);
      }
      MetricsReport report = evaluate_masks(preds, gts, ids, domains,
                                            manifest.domain_names, "eval", ev_pooled);
      echo_config(run_dir, {{"subcommand", "eval"},
                            {"manifest", ev_manifest},
                            {"pred_dir", ev_pred_dir},
                            {"out", run_dir.string()}});
      write_report(report, run_dir / "report.csv", run_dir / "report.json");
      std::cout << "mean seg_score " << report.mean_seg << " over " << report.per_image.size()
                << " images\n";
      return 0;
    }

    if (exp_cmd->parsed()) {
      if (!ex_seed_set) throw std::runtime_error("experiment requires --seed");
      std::filesystem::path run_dir = resolve_run_dir(ex_out, "experiment");
      ExperimentProtocol protocol;
      if (ex_kind == "cross_domain")
        protocol.kind = ExperimentProtocol::Kind::cross_domain;
      else if (ex_kind == "in_domain_holdout")
        protocol.kind = ExperimentProtocol::Kind::in_domain_holdout;
      else if (ex_kind == "full_train")
        protocol.kind = ExperimentProtocol::Kind::full_train;
      else
        throw std::runtime_error("unknown experiment kind: " + ex_kind);

      protocol.source = load_manifest(ex_manifest);
      if (!ex_eval.empty()) protocol.eval_set = load_manifest(ex_eval);
      if (!ex_domain_eval.empty()) protocol.domain_eval_set = load_manifest(ex_domain_eval);
      protocol.holdout_per_domain = ex_holdout;
      protocol.seed = ex_seed;
      protocol.run_baseline = ex_models.find("baseline") != std::string::npos;
      protocol.run_dcac = ex_models.find("dcac") != std::string::npos;

      PlanConfig p = plan_from_flags(ex_plan, ex_preset, ex_sets, false, ex_seed);
      echo_config(run_dir, {{"subcommand", "experiment"},
                            {"kind", ex_kind},
                            {"manifest", ex_manifest},
                            {"eval_manifest", ex_eval},
                            {"domain_eval_manifest", ex_domain_eval},
                            {"models", ex_models},
                            {"plan", json::parse(p.to_json())},
                            {"seed", ex_seed},
                            {"out", run_dir.string()}});
      ExperimentResult r = run_experiment(protocol, p, run_dir);
      std::cout << "experiment summary: " << r.summary_path.string() << "\n";
      return 0;
    }

    throw std::runtime_error("no subcommand dispatched");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dcaseg
