#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcaseg {

// Dense NCHW tensor. Vectors ride along as (n, c, 1, 1).
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

  static Tensor vec(int n_, int c_, T fill = T(0)) { return Tensor(n_, c_, 1, 1, fill); }

  size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }
  int hw() const { return h * w; }
  int chw() const { return c * h * w; }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  T* sample(int i) { return v.data() + static_cast<size_t>(i) * chw(); }
  const T* sample(int i) const { return v.data() + static_cast<size_t>(i) * chw(); }

  T& at(int in_, int ic, int iy, int ix) {
    return v[((static_cast<size_t>(in_) * c + ic) * h + iy) * w + ix];
  }
  T at(int in_, int ic, int iy, int ix) const {
    return v[((static_cast<size_t>(in_) * c + ic) * h + iy) * w + ix];
  }

  void zero() { std::fill(v.begin(), v.end(), T(0)); }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

template <typename T>
using EigenRowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<EigenRowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const EigenRowMat<T>>;

// C(m x n) = A(m x k) * B(k x n), all row-major contiguous.
template <typename T>
void gemm(const T* A, const T* B, T* C, int m, int k, int n, bool accumulate = false) {
  ConstMapMat<T> a(A, m, k);
  ConstMapMat<T> b(B, k, n);
  MapMat<T> c(C, m, n);
  if (accumulate)
    c.noalias() += a * b;
  else
    c.noalias() = a * b;
}

// C(m x n) = A(m x k) * B(n x k)^T
template <typename T>
void gemm_nt(const T* A, const T* B, T* C, int m, int k, int n, bool accumulate = false) {
  ConstMapMat<T> a(A, m, k);
  ConstMapMat<T> b(B, n, k);
  MapMat<T> c(C, m, n);
  if (accumulate)
    c.noalias() += a * b.transpose();
  else
    c.noalias() = a * b.transpose();
}

// C(m x n) = A(k x m)^T * B(k x n)
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, int m, int k, int n, bool accumulate = false) {
  ConstMapMat<T> a(A, k, m);
  ConstMapMat<T> b(B, k, n);
  MapMat<T> c(C, m, n);
  if (accumulate)
    c.noalias() += a.transpose() * b;
  else
    c.noalias() = a.transpose() * b;
}

// Channel concatenation and its inverse, used for skip connections.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw std::runtime_error("concat_channels shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  const size_t hw = static_cast<size_t>(a.h) * a.w;
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.sample(i), a.sample(i) + a.c * hw, out.sample(i));
    std::copy(b.sample(i), b.sample(i) + b.c * hw, out.sample(i) + a.c * hw);
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int c_first) {
  Tensor<T> a(x.n, c_first, x.h, x.w), b(x.n, x.c - c_first, x.h, x.w);
  const size_t hw = static_cast<size_t>(x.h) * x.w;
  for (int i = 0; i < x.n; ++i) {
    std::copy(x.sample(i), x.sample(i) + c_first * hw, a.sample(i));
    std::copy(x.sample(i) + c_first * hw, x.sample(i) + x.c * hw, b.sample(i));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
void accumulate_into(Tensor<T>& dst, const Tensor<T>& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  if (!dst.same_shape(src))
    throw std::runtime_error("accumulate shape mismatch " + dst.shape_str() + " vs " +
                             src.shape_str());
  for (size_t i = 0; i < dst.size(); ++i) dst.v[i] += src.v[i];
}

// Per-pixel softmax over the channel dimension, numerically stabilized.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  Tensor<T> probs(logits.n, logits.c, logits.h, logits.w);
  const int hw = logits.hw();
  for (int i = 0; i < logits.n; ++i) {
    const T* src = logits.sample(i);
    T* dst = probs.sample(i);
    for (int p = 0; p < hw; ++p) {
      T mx = src[p];
      for (int ch = 1; ch < logits.c; ++ch) mx = std::max(mx, src[ch * hw + p]);
      T sum = T(0);
      for (int ch = 0; ch < logits.c; ++ch) {
        T e = std::exp(src[ch * hw + p] - mx);
        dst[ch * hw + p] = e;
        sum += e;
      }
      for (int ch = 0; ch < logits.c; ++ch) dst[ch * hw + p] /= sum;
    }
  }
  return probs;
}

// Backward of softmax given dL/dprobs: dL/dlogit = p .* (dp - sum(dp .* p)).
template <typename T>
Tensor<T> softmax_channels_backward(const Tensor<T>& probs, const Tensor<T>& dprobs) {
  Tensor<T> dlogits(probs.n, probs.c, probs.h, probs.w);
  const int hw = probs.hw();
  for (int i = 0; i < probs.n; ++i) {
    const T* p = probs.sample(i);
    const T* dp = dprobs.sample(i);
    T* dl = dlogits.sample(i);
    for (int px = 0; px < hw; ++px) {
      T dot = T(0);
      for (int ch = 0; ch < probs.c; ++ch) dot += dp[ch * hw + px] * p[ch * hw + px];
      for (int ch = 0; ch < probs.c; ++ch)
        dl[ch * hw + px] = p[ch * hw + px] * (dp[ch * hw + px] - dot);
    }
  }
  return dlogits;
}

}  // namespace dcaseg
