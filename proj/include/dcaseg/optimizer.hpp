#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dcaseg/layers.hpp"

namespace dcaseg {

// Polynomial decay: lr0 * (1 - epoch/total)^exponent.
inline double poly_lr(int epoch, int total_epochs, double lr0, double exponent) {
  if (epoch < 0 || epoch > total_epochs)
    throw std::runtime_error("poly_lr epoch out of range");
  return lr0 * std::pow(1.0 - static_cast<double>(epoch) / total_epochs, exponent);
}

// Rescales all gradients so their global L2 norm does not exceed max_norm.
// A zero or negative max_norm disables clipping. Returns the pre-clip norm.
template <typename T>
double clip_grad_norm(ParamSet<T>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (const T g : *p.grad) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& p : params)
      for (T& g : *p.grad) g *= scale;
  }
  return norm;
}

// SGD with Nesterov momentum in look-ahead form:
//   v <- mu*v - lr*g;  theta <- theta + mu*v - lr*g
template <typename T>
struct SgdNesterov {
  double momentum = 0.99;
  std::vector<std::vector<T>> velocity;  // aligned with the param set
  long long steps = 0;

  explicit SgdNesterov(double mu = 0.99) : momentum(mu) {}

  void step(ParamSet<T>& params, double lr) {
    if (velocity.empty()) {
      velocity.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i)
        velocity[i].assign(params[i].value->size(), T(0));
    }
    if (velocity.size() != params.size())
      throw std::runtime_error("optimizer/param set size mismatch");
    const T mu = static_cast<T>(momentum);
    const T lr_t = static_cast<T>(lr);
    for (size_t i = 0; i < params.size(); ++i) {
      std::vector<T>& theta = *params[i].value;
      std::vector<T>& grad = *params[i].grad;
      std::vector<T>& v = velocity[i];
      for (size_t j = 0; j < theta.size(); ++j) {
        if (!std::isfinite(static_cast<double>(grad[j])))
          throw std::runtime_error("divergence: non-finite gradient in " + params[i].name);
        v[j] = mu * v[j] - lr_t * grad[j];
        theta[j] += mu * v[j] - lr_t * grad[j];
      }
    }
    ++steps;
  }
};

}  // namespace dcaseg
