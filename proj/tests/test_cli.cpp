#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <fstream>

#include "dcaseg/manifest.hpp"
#include "dcaseg/metrics.hpp"
#include "dcaseg/png_io.hpp"
#include "support.hpp"

using namespace dcaseg;
using testsup::TempDir;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DCASEG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("--help exits 0, unknown flags exit nonzero") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("synth --help") == 0);
  CHECK(run_cli("--definitely-not-a-flag") != 0);
  CHECK(run_cli("synth --bogus 3") != 0);
  CHECK(run_cli("frobnicate") != 0);
}

TEST_CASE("synth subcommand writes the requested dataset") {
  TempDir tmp("cli-synth");
  const std::string out = (tmp.path / "data").string();
  CHECK(run_cli("synth --domains 4 --per-domain 10 --seed 7 --size 48 --out " + out) == 0);
  DatasetManifest m = load_manifest(tmp.path / "data" / "manifest.json");
  CHECK(m.samples.size() == 40);
  CHECK(m.num_domains() == 4);
  CHECK(std::filesystem::exists(tmp.path / "data" / "config.resolved.json"));

  // seed is required
  CHECK(run_cli("synth --domains 2 --per-domain 2 --out " + (tmp.path / "x").string()) != 0);
}

TEST_CASE("plan subcommand derives and stores a plan") {
  TempDir tmp("cli-plan");
  const std::string data = (tmp.path / "data").string();
  REQUIRE(run_cli("synth --domains 2 --per-domain 2 --seed 3 --size 64 --out " + data) == 0);
  const std::string out = (tmp.path / "plan").string();
  CHECK(run_cli("plan --manifest " + data + "/manifest.json --out " + out) == 0);
  CHECK(std::filesystem::exists(tmp.path / "plan" / "plan.json"));
}

TEST_CASE("end-to-end: train, infer, eval on a micro run") {
  TempDir tmp("cli-e2e");
  const std::string data = (tmp.path / "data").string();
  REQUIRE(run_cli("synth --domains 2 --per-domain 3 --seed 5 --size 32 --out " + data) == 0);

  const std::string train_out = (tmp.path / "train").string();
  CHECK(run_cli("train --manifest " + data + "/manifest.json --seed 9 --out " + train_out +
                " --set patch_size=32 --set depth=2 --set base_channels=4"
                " --set epochs=2 --set minibatches_per_epoch=2") == 0);
  CHECK(std::filesystem::exists(tmp.path / "train" / "checkpoint.bin"));
  CHECK(std::filesystem::exists(tmp.path / "train" / "train_log.csv"));

  const std::string infer_out = (tmp.path / "pred").string();
  CHECK(run_cli("infer --manifest " + data + "/manifest.json --checkpoint " + train_out +
                "/checkpoint.bin --save-probs --out " + infer_out) == 0);
  CHECK(std::filesystem::exists(tmp.path / "pred" / "d0_s0000_pred.png"));
  CHECK(std::filesystem::exists(tmp.path / "pred" / "d0_s0000_probs.f32"));
  CHECK(std::filesystem::exists(tmp.path / "pred" / "d0_s0000_probs.json"));

  const std::string eval_out = (tmp.path / "eval").string();
  CHECK(run_cli("eval --manifest " + data + "/manifest.json --pred-dir " + infer_out +
                " --out " + eval_out) == 0);
  CHECK(std::filesystem::exists(tmp.path / "eval" / "report.csv"));
  CHECK(std::filesystem::exists(tmp.path / "eval" / "report.json"));
}

TEST_CASE("eval scores perfect predictions at seg_score 1.0") {
  TempDir tmp("cli-eval-perfect");
  const std::string data = (tmp.path / "data").string();
  REQUIRE(run_cli("synth --domains 2 --per-domain 2 --seed 13 --size 32 --out " + data) == 0);

  // copy the ground-truth masks as predictions
  DatasetManifest m = load_manifest(tmp.path / "data" / "manifest.json");
  std::filesystem::path pred_dir = tmp.path / "preds";
  std::filesystem::create_directories(pred_dir);
  for (const Sample& s : m.samples) {
    Mask gt = read_mask_png(s.mask_path);
    write_mask_png(pred_dir / (s.image_path.stem().string() + "_pred.png"), gt);
  }
  const std::string eval_out = (tmp.path / "eval").string();
  REQUIRE(run_cli("eval --manifest " + data + "/manifest.json --pred-dir " +
                  pred_dir.string() + " --out " + eval_out) == 0);
  MetricsReport r = read_report_csv(tmp.path / "eval" / "report.csv");
  CHECK(r.mean_seg == 1.0);
}

TEST_CASE("experiment subcommand runs the holdout protocol end to end") {
  TempDir tmp("cli-exp");
  const std::string data = (tmp.path / "data").string();
  REQUIRE(run_cli("synth --domains 2 --per-domain 4 --seed 19 --size 32 --out " + data) == 0);
  const std::string out = (tmp.path / "exp").string();
  CHECK(run_cli("experiment --kind in_domain_holdout --manifest " + data +
                "/manifest.json --holdout-per-domain 1 --models baseline --seed 3 --out " +
                out +
                " --set patch_size=32 --set depth=2 --set base_channels=2"
                " --set epochs=1 --set minibatches_per_epoch=1") == 0);
  CHECK(std::filesystem::exists(tmp.path / "exp" / "experiment_summary.json"));
  CHECK(std::filesystem::exists(tmp.path / "exp" / "baseline" / "report.csv"));

  // unknown kind is rejected
  CHECK(run_cli("experiment --kind sideways --manifest " + data + "/manifest.json --seed 1") !=
        0);
}

TEST_CASE("crossval subcommand emits k checkpoints and fold reports") {
  TempDir tmp("cli-cv");
  const std::string data = (tmp.path / "data").string();
  REQUIRE(run_cli("synth --domains 2 --per-domain 5 --seed 17 --size 32 --out " + data) == 0);
  const std::string out = (tmp.path / "cv").string();
  CHECK(run_cli("crossval --manifest " + data + "/manifest.json --k 5 --seed 21 --out " + out +
                " --set patch_size=32 --set depth=2 --set base_channels=2"
                " --set epochs=1 --set minibatches_per_epoch=1") == 0);
  for (int fold = 0; fold < 5; ++fold) {
    auto dir = tmp.path / "cv" / ("fold_" + std::to_string(fold));
    CHECK(std::filesystem::exists(dir / "checkpoint.bin"));
    CHECK(std::filesystem::exists(dir / "report.csv"));
    CHECK(std::filesystem::exists(dir / "report.json"));
  }
  CHECK(std::filesystem::exists(tmp.path / "cv" / "crossval_summary.json"));
}
