#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dcaseg/layers.hpp"
#include "dcaseg/rng.hpp"
#include "dcaseg/tensor.hpp"

namespace testsup {

// Self-deleting unique temp directory.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("dcaseg-" + tag + "-" + std::to_string(std::rand()) +
            std::to_string(std::rand()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

// Reference convolution: direct quadruple loop, same padding semantics as
// the library (pad = (k-1)/2, arbitrary stride).
template <typename T>
dcaseg::Tensor<T> reference_conv2d(const dcaseg::Tensor<T>& x, const std::vector<T>& weight,
                                   const std::vector<T>& bias, int out_ch, int k,
                                   int stride = 1) {
  const int pad = (k - 1) / 2;
  const int in_ch = x.c;
  const int oh = (x.h + 2 * pad - k) / stride + 1;
  const int ow = (x.w + 2 * pad - k) / stride + 1;
  dcaseg::Tensor<T> y(x.n, out_ch, oh, ow);
  for (int n = 0; n < x.n; ++n) {
    for (int oc = 0; oc < out_ch; ++oc) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          T acc = bias.empty() ? T(0) : bias[oc];
          for (int ic = 0; ic < in_ch; ++ic) {
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride + ky - pad;
                const int ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                acc += weight[((static_cast<size_t>(oc) * in_ch + ic) * k + ky) * k + kx] *
                       x.at(n, ic, iy, ix);
              }
            }
          }
          y.at(n, oc, oy, ox) = acc;
        }
      }
    }
  }
  return y;
}

template <typename T>
void randomize(std::vector<T>& v, dcaseg::Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (T& x : v) x = static_cast<T>(rng.uniform(lo, hi));
}

template <typename T>
void randomize(dcaseg::Tensor<T>& t, dcaseg::Rng& rng, double lo = -1.0, double hi = 1.0) {
  randomize(t.v, rng, lo, hi);
}

// Central-difference gradient check over a sampled subset of coordinates.
// relative error = |analytic - fd| / max(|analytic|, |fd|, floor); the floor
// turns the bound into an absolute tolerance for near-zero gradients.
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  size_t checked = 0;
};

inline GradCheckResult gradcheck(
    dcaseg::ParamSet<double>& params,
    const std::function<double()>& loss_fn,
    const std::function<void()>& backward_fn,
    dcaseg::Rng& rng, int samples_per_tensor = 6, double h = 1e-5,
    double floor = 1e-3) {
  // analytic gradients at the base point
  dcaseg::zero_grads(params);
  loss_fn();
  backward_fn();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(*p.grad);

  GradCheckResult result;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    std::vector<double>& value = *params[pi].value;
    if (value.empty()) continue;
    for (int s = 0; s < samples_per_tensor; ++s) {
      const size_t j = static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(value.size()) - 1));
      const double orig = value[j];
      value[j] = orig + h;
      const double lp = loss_fn();
      value[j] = orig - h;
      const double lm = loss_fn();
      value[j] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = analytic[pi][j];
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), floor});
      ++result.checked;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = params[pi].name + "[" + std::to_string(j) + "]";
      }
    }
  }
  return result;
}

}  // namespace testsup
