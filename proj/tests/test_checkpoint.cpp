#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "dcaseg/checkpoint.hpp"
#include "dcaseg/inference.hpp"
#include "dcaseg/model.hpp"
#include "support.hpp"

using namespace dcaseg;
using testsup::TempDir;

namespace {

PlanConfig tiny_plan(bool dcac) {
  PlanConfig p;
  p.patch_size = 16;
  p.depth = 2;
  p.base_channels = 4;
  p.num_classes = 2;
  p.num_domains = 3;
  p.predictor_hidden = 8;
  p.dcac_enabled = dcac;
  return p;
}

}  // namespace

TEST_CASE("checkpoint round-trip is bit-stable and preserves names/shapes") {
  TempDir tmp("ckpt-rt");
  PlanConfig plan = tiny_plan(true);
  SegModel<float> model(plan);
  Rng rng(3);
  model.init(rng);
  ParamSet<float> params = model.params();

  save_checkpoint(tmp.path / "c.bin", plan, params);
  Checkpoint ckpt = load_checkpoint(tmp.path / "c.bin");

  CHECK(ckpt.plan.to_json() == plan.to_json());
  REQUIRE(ckpt.order.size() == params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    CHECK(ckpt.order[i] == params[i].name);
    const auto& [shape, data] = ckpt.tensors.at(params[i].name);
    CHECK(shape == params[i].shape);
    CHECK(data == *params[i].value);  // bitwise float equality
  }

  // dcac tensors live under their own namespace in the same container
  bool has_dcac = false, has_backbone = false;
  for (const std::string& name : ckpt.order) {
    has_dcac |= name.rfind("dcac.", 0) == 0;
    has_backbone |= name.rfind("backbone.", 0) == 0;
  }
  CHECK(has_dcac);
  CHECK(has_backbone);

  // loading into a second model reproduces the parameters exactly
  SegModel<float> other(ckpt.plan);
  ParamSet<float> other_params = other.params();
  load_into(ckpt, other_params);
  for (size_t i = 0; i < params.size(); ++i)
    CHECK(*other_params[i].value == *params[i].value);

  // re-saving writes the identical byte stream
  save_checkpoint(tmp.path / "c2.bin", ckpt.plan, other_params);
  std::ifstream a(tmp.path / "c.bin", std::ios::binary), b(tmp.path / "c2.bin", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("checkpoint rejects foreign files and mismatched models") {
  TempDir tmp("ckpt-bad");
  {
    std::ofstream out(tmp.path / "junk.bin", std::ios::binary);
    out << "this is not a checkpoint at all";
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(tmp.path / "junk.bin"),
                       doctest::Contains("not a checkpoint"), std::runtime_error);
  CHECK_THROWS_WITH_AS(load_checkpoint(tmp.path / "absent.bin"),
                       doctest::Contains("missing file"), std::runtime_error);

  // a baseline checkpoint cannot fill a dcac model
  PlanConfig base_plan = tiny_plan(false);
  SegModel<float> base(base_plan);
  Rng rng(5);
  base.init(rng);
  ParamSet<float> base_params = base.params();
  save_checkpoint(tmp.path / "base.bin", base_plan, base_params);
  Checkpoint ckpt = load_checkpoint(tmp.path / "base.bin");

  SegModel<float> dcac_model(tiny_plan(true));
  ParamSet<float> dcac_params = dcac_model.params();
  CHECK_THROWS_WITH_AS(load_into(ckpt, dcac_params), doctest::Contains("missing tensor"),
                       std::runtime_error);
}

TEST_CASE("checkpoint preserves forward behavior exactly") {
  TempDir tmp("ckpt-fwd");
  PlanConfig plan = tiny_plan(true);
  SegModel<float> model(plan);
  Rng rng(7);
  model.init(rng);
  Tensor<float> x(1, 3, 16, 16);
  testsup::randomize(x, rng, 0.0, 1.0);
  auto before = model.forward(x);

  ParamSet<float> params = model.params();
  save_checkpoint(tmp.path / "c.bin", plan, params);
  auto models = load_fold_models({tmp.path / "c.bin"});
  auto after = models[0]->forward(x);
  CHECK(before.logits.v == after.logits.v);
  CHECK(before.domain_probs.v == after.domain_probs.v);
}
