#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dcaseg/losses.hpp"
#include "support.hpp"

using namespace dcaseg;

namespace {

Tensor<double> onehot_probs(const Mask& m, int classes, double hi = 1.0) {
  Tensor<double> p(1, classes, m.h, m.w);
  const int hw = m.h * m.w;
  const double lo = (1.0 - hi) / (classes - 1);
  for (int pix = 0; pix < hw; ++pix)
    for (int c = 0; c < classes; ++c)
      p.v[static_cast<size_t>(c) * hw + pix] = (m.data[pix] == c) ? hi : lo;
  return p;
}

}  // namespace

TEST_CASE("soft dice: perfect one-hot prediction scores near zero") {
  Mask m(64, 64, 0);
  for (int y = 20; y < 40; ++y)
    for (int x = 10; x < 30; ++x) m.at(y, x) = 1;
  Tensor<double> probs = onehot_probs(m, 2);
  double loss = soft_dice_loss(probs, {m});
  CHECK(loss < 1e-4);
}

TEST_CASE("soft dice: total miss on non-empty target approaches one") {
  Mask m(16, 16, 0);
  for (int i = 0; i < 40; ++i) m.data[i] = 1;
  // assign zero probability to every true-foreground pixel
  Tensor<double> probs(1, 2, 16, 16);
  const int hw = 256;
  for (int pix = 0; pix < hw; ++pix) {
    const bool fg = m.data[pix] != 0;
    probs.v[pix] = fg ? 1.0 : 0.0;        // background channel
    probs.v[hw + pix] = fg ? 0.0 : 1.0;   // foreground on wrong pixels
  }
  double loss = soft_dice_loss(probs, {m});
  CHECK(loss == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("soft dice: uniform-probability hand computation") {
  // 8 foreground pixels out of 64, p = 0.5 everywhere:
  // 1 - (2*4 + eps) / (32 + 8 + eps) ~= 0.8
  Mask m(8, 8, 0);
  for (int i = 0; i < 8; ++i) m.data[i] = 1;
  Tensor<double> probs(1, 2, 8, 8, 0.5);
  const double eps = 1e-5;
  double loss = soft_dice_loss(probs, {m}, eps);
  const double expected = 1.0 - (2.0 * 4.0 + eps) / (32.0 + 8.0 + eps);
  CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
  CHECK(loss == doctest::Approx(0.8).epsilon(1e-4));
}

TEST_CASE("soft dice: gradient matches central differences") {
  Rng rng(21);
  Mask m(6, 6, 0);
  for (auto& v : m.data) v = rng.bernoulli(0.3) ? 1 : 0;
  Tensor<double> logits(2, 2, 6, 6);
  testsup::randomize(logits, rng, -2.0, 2.0);
  std::vector<Mask> masks = {m, m};

  auto eval = [&]() {
    Tensor<double> p = softmax_channels(logits);
    return soft_dice_loss<double>(p, masks, 1e-5, nullptr);
  };
  Tensor<double> probs = softmax_channels(logits);
  Tensor<double> dprobs;
  soft_dice_loss(probs, masks, 1e-5, &dprobs);
  Tensor<double> dlogits = softmax_channels_backward(probs, dprobs);

  const double h = 1e-5;
  for (int trial = 0; trial < 30; ++trial) {
    size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(logits.size()) - 1));
    double orig = logits.v[j];
    logits.v[j] = orig + h;
    double lp = eval();
    logits.v[j] = orig - h;
    double lm = eval();
    logits.v[j] = orig;
    double fd = (lp - lm) / (2 * h);
    CHECK(std::abs(dlogits.v[j] - fd) /
              std::max({std::abs(fd), std::abs(dlogits.v[j]), 1e-3}) < 1e-4);
  }
}

TEST_CASE("cross entropy: strong correct logits give tiny loss") {
  Mask m(4, 4, 1);
  Tensor<double> logits(1, 2, 4, 4);
  for (int pix = 0; pix < 16; ++pix) {
    logits.v[pix] = -10.0;
    logits.v[16 + pix] = 10.0;
  }
  CHECK(cross_entropy_loss<double>(logits, {m}, nullptr) < 1e-3);
}

TEST_CASE("cross entropy: uniform logits give ln 2") {
  Mask m(8, 8, 0);
  Tensor<double> logits(1, 2, 8, 8, 0.7);  // equal for both classes
  double loss = cross_entropy_loss<double>(logits, {m}, nullptr);
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy: two-pixel hand computation to 1e-12") {
  // pixel 0: logits (0.3, -0.2), target 0 -> -log(e^0.3/(e^0.3+e^-0.2))
  // pixel 1: logits (1.0, 2.0), target 1 -> -log(e^2/(e^1+e^2))
  Tensor<double> logits(1, 2, 1, 2);
  logits.at(0, 0, 0, 0) = 0.3;
  logits.at(0, 0, 0, 1) = 1.0;
  logits.at(0, 1, 0, 0) = -0.2;
  logits.at(0, 1, 0, 1) = 2.0;
  Mask m(1, 2, 0);
  m.data[1] = 1;
  const double l0 = -std::log(std::exp(0.3) / (std::exp(0.3) + std::exp(-0.2)));
  const double l1 = -std::log(std::exp(2.0) / (std::exp(1.0) + std::exp(2.0)));
  double loss = cross_entropy_loss<double>(logits, {m}, nullptr);
  CHECK(loss == doctest::Approx(0.5 * (l0 + l1)).epsilon(1e-12));
}

TEST_CASE("cross entropy: gradient matches central differences") {
  Rng rng(22);
  Mask m(5, 5, 0);
  for (auto& v : m.data) v = rng.bernoulli(0.5) ? 1 : 0;
  Tensor<double> logits(1, 2, 5, 5);
  testsup::randomize(logits, rng, -3.0, 3.0);
  Tensor<double> dlogits;
  cross_entropy_loss(logits, {m}, &dlogits);
  const double h = 1e-6;
  for (int trial = 0; trial < 25; ++trial) {
    size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(logits.size()) - 1));
    double orig = logits.v[j];
    logits.v[j] = orig + h;
    double lp = cross_entropy_loss<double>(logits, {m}, nullptr);
    logits.v[j] = orig - h;
    double lm = cross_entropy_loss<double>(logits, {m}, nullptr);
    logits.v[j] = orig;
    CHECK(dlogits.v[j] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("domain loss: exact one-hot prediction scores zero") {
  Tensor<double> probs = Tensor<double>::vec(1, 3);
  probs.v = {0.0, 1.0, 0.0};
  CHECK(domain_loss<double>(probs, {1}, nullptr) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("domain loss: uniform over three domains gives ln 3") {
  Tensor<double> probs = Tensor<double>::vec(2, 3, 1.0 / 3.0);
  double loss = domain_loss<double>(probs, {0, 2}, nullptr);
  CHECK(loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("domain loss: hand case (0.7, 0.2, 0.1) label 0") {
  Tensor<double> probs = Tensor<double>::vec(1, 3);
  probs.v = {0.7, 0.2, 0.1};
  CHECK(domain_loss<double>(probs, {0}, nullptr) ==
        doctest::Approx(-std::log(0.7)).epsilon(1e-12));
  CHECK(domain_loss<double>(probs, {0}, nullptr) == doctest::Approx(0.356675).epsilon(1e-5));
}

TEST_CASE("domain loss: label range and K guards") {
  Tensor<double> probs = Tensor<double>::vec(1, 3, 1.0 / 3.0);
  CHECK_THROWS_AS(domain_loss<double>(probs, {3}, nullptr), std::runtime_error);
  Tensor<double> single = Tensor<double>::vec(1, 1, 1.0);
  CHECK_THROWS_AS(domain_loss<double>(single, {0}, nullptr), std::runtime_error);
}

TEST_CASE("domain loss: gradient matches central differences through a softmax") {
  Rng rng(23);
  Tensor<double> logits = Tensor<double>::vec(3, 4);
  testsup::randomize(logits, rng, -2.0, 2.0);
  std::vector<int> labels = {0, 3, 1};
  auto eval = [&]() {
    Tensor<double> p = softmax_channels(logits);
    return domain_loss<double>(p, labels, nullptr);
  };
  Tensor<double> probs = softmax_channels(logits);
  Tensor<double> dprobs;
  domain_loss(probs, labels, &dprobs);
  Tensor<double> dlogits = softmax_channels_backward(probs, dprobs);
  const double h = 1e-6;
  for (size_t j = 0; j < logits.size(); ++j) {
    double orig = logits.v[j];
    logits.v[j] = orig + h;
    double lp = eval();
    logits.v[j] = orig - h;
    double lm = eval();
    logits.v[j] = orig;
    CHECK(dlogits.v[j] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("loss breakdown identities hold exactly as computed") {
  LossBreakdown b = LossBreakdown::make(0.31, 0.42, 0.9, 0.5);
  CHECK(b.seg_loss == b.dice_loss + b.ce_loss);
  CHECK(b.total == b.seg_loss + b.lambda * b.domain_loss);

  LossBreakdown off = LossBreakdown::make(0.31, 0.42, 0.0, 1.0);
  CHECK(off.total == off.seg_loss);
}

TEST_CASE("losses are nonnegative and finite on random inputs") {
  Rng rng(24);
  for (int trial = 0; trial < 30; ++trial) {
    Mask m(6, 6, 0);
    for (auto& v : m.data) v = rng.bernoulli(0.4) ? 1 : 0;
    Tensor<double> logits(1, 2, 6, 6);
    testsup::randomize(logits, rng, -5.0, 5.0);
    Tensor<double> probs = softmax_channels(logits);
    double dice = soft_dice_loss<double>(probs, {m}, 1e-5, nullptr);
    double ce = cross_entropy_loss<double>(logits, {m}, nullptr);
    CHECK(dice >= 0.0);
    CHECK(dice <= 1.0 + 1e-9);
    CHECK(ce >= 0.0);
    CHECK(std::isfinite(dice));
    CHECK(std::isfinite(ce));
  }
}

TEST_CASE("dice is permutation-invariant over pixels") {
  Rng rng(25);
  Mask m(4, 8, 0);
  for (auto& v : m.data) v = rng.bernoulli(0.5) ? 1 : 0;
  Tensor<double> probs(1, 2, 4, 8);
  testsup::randomize(probs, rng, 0.0, 1.0);
  // normalize pairs to a simplex
  for (int p = 0; p < 32; ++p) {
    double s = probs.v[p] + probs.v[32 + p];
    probs.v[p] /= s;
    probs.v[32 + p] /= s;
  }
  double base = soft_dice_loss<double>(probs, {m}, 1e-5, nullptr);

  // apply the same pixel permutation (here: reversal) to probs and mask
  Mask mr(4, 8, 0);
  Tensor<double> pr(1, 2, 4, 8);
  for (int p = 0; p < 32; ++p) {
    mr.data[p] = m.data[31 - p];
    pr.v[p] = probs.v[31 - p];
    pr.v[32 + p] = probs.v[32 + 31 - p];
  }
  double perm = soft_dice_loss<double>(pr, {mr}, 1e-5, nullptr);
  CHECK(base == doctest::Approx(perm).epsilon(1e-12));
}
