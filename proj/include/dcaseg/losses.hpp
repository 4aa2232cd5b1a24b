#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dcaseg/image.hpp"
#include "dcaseg/tensor.hpp"

namespace dcaseg {

// Scalar summary of one optimization step's objective.
struct LossBreakdown {
  double dice_loss = 0.0;
  double ce_loss = 0.0;
  double seg_loss = 0.0;     // dice_loss + ce_loss
  double domain_loss = 0.0;  // zero when the dynamic heads are disabled
  double total = 0.0;        // seg_loss + lambda * domain_loss
  double lambda = 1.0;

  static LossBreakdown make(double dice, double ce, double domain, double lambda_) {
    LossBreakdown b;
    b.dice_loss = dice;
    b.ce_loss = ce;
    b.seg_loss = dice + ce;
    b.domain_loss = domain;
    b.lambda = lambda_;
    b.total = b.seg_loss + lambda_ * domain;
    return b;
  }
  LossBreakdown& operator+=(const LossBreakdown& o) {
    dice_loss += o.dice_loss;
    ce_loss += o.ce_loss;
    seg_loss += o.seg_loss;
    domain_loss += o.domain_loss;
    total += o.total;
    lambda = o.lambda;
    return *this;
  }
  LossBreakdown scaled(double f) const {
    LossBreakdown b = *this;
    b.dice_loss *= f;
    b.ce_loss *= f;
    b.seg_loss *= f;
    b.domain_loss *= f;
    b.total *= f;
    return b;
  }
};

namespace detail {
template <typename T>
void check_targets(const Tensor<T>& t, const std::vector<Mask>& targets) {
  if (static_cast<int>(targets.size()) != t.n)
    throw std::runtime_error("target batch size mismatch");
  for (const Mask& m : targets) {
    if (m.h != t.h || m.w != t.w) throw std::runtime_error("target shape mismatch");
  }
}
}  // namespace detail

// Soft Dice loss over foreground classes with batch-aggregated sums:
//   1 - mean_fg (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps)
// probs must be per-pixel class probabilities.
template <typename T>
T soft_dice_loss(const Tensor<T>& probs, const std::vector<Mask>& targets,
                 T eps = static_cast<T>(1e-5), Tensor<T>* dprobs = nullptr) {
  detail::check_targets(probs, targets);
  const int C = probs.c, hw = probs.hw();
  if (C < 2) throw std::runtime_error("dice needs at least 2 classes");

  std::vector<T> inter(C, T(0)), psum(C, T(0)), tsum(C, T(0));
  for (int i = 0; i < probs.n; ++i) {
    const T* ps = probs.sample(i);
    const Mask& m = targets[i];
    for (int c = 1; c < C; ++c) {
      const T* pc = ps + static_cast<size_t>(c) * hw;
      T in = T(0), pp = T(0), tt = T(0);
      for (int p = 0; p < hw; ++p) {
        const T t = (m.data[p] == c) ? T(1) : T(0);
        in += pc[p] * t;
        pp += pc[p];
        tt += t;
      }
      inter[c] += in;
      psum[c] += pp;
      tsum[c] += tt;
    }
  }

  const int fg_classes = C - 1;
  T loss = T(0);
  for (int c = 1; c < C; ++c) {
    loss += (T(2) * inter[c] + eps) / (psum[c] + tsum[c] + eps);
  }
  loss = T(1) - loss / fg_classes;

  if (dprobs) {
    *dprobs = Tensor<T>(probs.n, C, probs.h, probs.w);
    for (int c = 1; c < C; ++c) {
      const T denom = psum[c] + tsum[c] + eps;
      const T numer = T(2) * inter[c] + eps;
      for (int i = 0; i < probs.n; ++i) {
        const Mask& m = targets[i];
        T* dc = dprobs->sample(i) + static_cast<size_t>(c) * hw;
        for (int p = 0; p < hw; ++p) {
          const T t = (m.data[p] == c) ? T(1) : T(0);
          dc[p] = -(T(2) * t * denom - numer) / (denom * denom * fg_classes);
        }
      }
    }
  }
  return loss;
}

// Pixel-mean cross entropy on logits, stabilized by max subtraction.
template <typename T>
T cross_entropy_loss(const Tensor<T>& logits, const std::vector<Mask>& targets,
                     Tensor<T>* dlogits = nullptr) {
  detail::check_targets(logits, targets);
  const int C = logits.c, hw = logits.hw();
  const T inv_count = T(1) / (static_cast<T>(logits.n) * hw);

  if (dlogits) *dlogits = Tensor<T>(logits.n, C, logits.h, logits.w);
  T loss = T(0);
  for (int i = 0; i < logits.n; ++i) {
    const T* ls = logits.sample(i);
    const Mask& m = targets[i];
    T* dl = dlogits ? dlogits->sample(i) : nullptr;
    for (int p = 0; p < hw; ++p) {
      const int y = m.data[p];
      if (y >= C) throw std::runtime_error("target class out of range");
      T mx = ls[p];
      for (int c = 1; c < C; ++c) mx = std::max(mx, ls[static_cast<size_t>(c) * hw + p]);
      T sum = T(0);
      for (int c = 0; c < C; ++c) sum += std::exp(ls[static_cast<size_t>(c) * hw + p] - mx);
      loss += (std::log(sum) + mx - ls[static_cast<size_t>(y) * hw + p]) * inv_count;
      if (dl) {
        for (int c = 0; c < C; ++c) {
          const T sm = std::exp(ls[static_cast<size_t>(c) * hw + p] - mx) / sum;
          dl[static_cast<size_t>(c) * hw + p] = (sm - (c == y ? T(1) : T(0))) * inv_count;
        }
      }
    }
  }
  return loss;
}

// Categorical cross entropy of predicted domain probabilities against
// one-hot labels, batch-mean, with a log clamp at 1e-12.
template <typename T>
T domain_loss(const Tensor<T>& probs, const std::vector<int>& labels,
              Tensor<T>* dprobs = nullptr) {
  if (probs.h != 1 || probs.w != 1)
    throw std::runtime_error("domain_loss expects (n, K) probabilities");
  if (static_cast<int>(labels.size()) != probs.n)
    throw std::runtime_error("domain label batch size mismatch");
  const int K = probs.c;
  if (K < 2) throw std::runtime_error("domain_loss requires K >= 2");
  const T clamp = static_cast<T>(1e-12);
  const T inv_n = T(1) / probs.n;

  if (dprobs) *dprobs = Tensor<T>::vec(probs.n, K);
  T loss = T(0);
  for (int i = 0; i < probs.n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= K) throw std::runtime_error("domain_id out of range");
    const T p = probs.v[static_cast<size_t>(i) * K + y];
    loss -= std::log(std::max(p, clamp)) * inv_n;
    if (dprobs && p > clamp) {
      dprobs->v[static_cast<size_t>(i) * K + y] = -inv_n / p;
    }
  }
  return loss;
}

// Combined segmentation objective: Dice on softmax probabilities plus CE on
// the raw logits. Returns the gradient with respect to the logits.
template <typename T>
struct SegLossResult {
  T dice_loss;
  T ce_loss;
  Tensor<T> dlogits;
};

template <typename T>
SegLossResult<T> seg_loss(const Tensor<T>& logits, const std::vector<Mask>& targets,
                          T dice_eps = static_cast<T>(1e-5), bool with_grad = true) {
  SegLossResult<T> r;
  Tensor<T> probs = softmax_channels(logits);
  Tensor<T> d_dice_dp;
  r.dice_loss = soft_dice_loss(probs, targets, dice_eps, with_grad ? &d_dice_dp : nullptr);
  Tensor<T> d_ce;
  r.ce_loss = cross_entropy_loss(logits, targets, with_grad ? &d_ce : nullptr);
  if (with_grad) {
    r.dlogits = softmax_channels_backward(probs, d_dice_dp);
    accumulate_into(r.dlogits, d_ce);
  }
  return r;
}

}  // namespace dcaseg
