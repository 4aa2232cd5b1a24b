#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dcaseg/rng.hpp"
#include "dcaseg/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dcaseg {

// Named view of one parameter buffer and its gradient.
template <typename T>
struct ParamRef {
  std::string name;
  std::vector<int> shape;
  std::vector<T>* value;
  std::vector<T>* grad;
};

template <typename T>
using ParamSet = std::vector<ParamRef<T>>;

template <typename T>
void zero_grads(ParamSet<T>& params) {
  for (auto& p : params) std::fill(p.grad->begin(), p.grad->end(), T(0));
}

inline void set_num_threads(int jobs) {
#ifdef _OPENMP
  if (jobs > 0) omp_set_num_threads(jobs);
#else
  (void)jobs;
#endif
}

template <typename T>
void he_uniform_fill(std::vector<T>& w, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  for (T& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
}

namespace detail {

// im2col for one sample: col is (Cin*k*k) x (OH*OW), row-major.
template <typename T>
void im2col(const T* x, int cin, int h, int w, int k, int stride, int pad,
            int oh, int ow, T* col) {
  for (int ci = 0; ci < cin; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + (static_cast<size_t>(ci) * k * k + ky * k + kx) *
                           (static_cast<size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = T(0);
            continue;
          }
          const T* src_row = x + (static_cast<size_t>(ci) * h + iy) * w;
          if (stride == 1) {
            // contiguous span copy with zero fringes
            int ox0 = std::max(0, pad - kx);
            int ox1 = std::min(ow, w + pad - kx);
            for (int ox = 0; ox < ox0; ++ox) dst[oy * ow + ox] = T(0);
            for (int ox = ox0; ox < ox1; ++ox) dst[oy * ow + ox] = src_row[ox + kx - pad];
            for (int ox = ox1; ox < ow; ++ox) dst[oy * ow + ox] = T(0);
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kx - pad;
              dst[oy * ow + ox] = (ix >= 0 && ix < w) ? src_row[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

// Gather-form col2im: accumulation-free, safe to run per output pixel.
template <typename T>
void col2im(const T* col, int cin, int h, int w, int k, int stride, int pad,
            int oh, int ow, T* dx) {
  for (int ci = 0; ci < cin; ++ci) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        T acc = T(0);
        for (int ky = 0; ky < k; ++ky) {
          const int ty = y + pad - ky;
          if (ty < 0 || ty % stride != 0) continue;
          const int oy = ty / stride;
          if (oy >= oh) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int tx = x + pad - kx;
            if (tx < 0 || tx % stride != 0) continue;
            const int ox = tx / stride;
            if (ox >= ow) continue;
            acc += col[(static_cast<size_t>(ci) * k * k + ky * k + kx) *
                           (static_cast<size_t>(oh) * ow) +
                       static_cast<size_t>(oy) * ow + ox];
          }
        }
        dx[(static_cast<size_t>(ci) * h + y) * w + x] = acc;
      }
    }
  }
}

}  // namespace detail

// 2-D convolution, odd kernel, same-padding, stride 1 or 2.
// Weight layout: [out_ch][in_ch*k*k] row-major, bias [out_ch].
template <typename T>
struct Conv2d {
  int in_ch = 0, out_ch = 0, k = 3, stride = 1, pad = 1;
  std::vector<T> weight, bias, gweight, gbias;
  bool need_dx = true;  // first layer of the network can skip input grads

  Tensor<T> x_cache;

  Conv2d() = default;
  Conv2d(int in_c, int out_c, int kernel, int stride_ = 1)
      : in_ch(in_c), out_ch(out_c), k(kernel), stride(stride_), pad((kernel - 1) / 2) {
    weight.assign(static_cast<size_t>(out_ch) * in_ch * k * k, T(0));
    bias.assign(out_ch, T(0));
    gweight.assign(weight.size(), T(0));
    gbias.assign(bias.size(), T(0));
  }

  void init(Rng& rng) { he_uniform_fill(weight, in_ch * k * k, rng); }

  int out_h(int h) const { return (h + 2 * pad - k) / stride + 1; }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c != in_ch)
      throw std::runtime_error("conv channel mismatch: got " + x.shape_str());
    x_cache = x;
    const int oh = out_h(x.h), ow = out_h(x.w);
    Tensor<T> y(x.n, out_ch, oh, ow);
    const int rows = in_ch * k * k;
    const size_t csz = static_cast<size_t>(rows) * oh * ow;
#pragma omp parallel
    {
      std::vector<T> col(csz);
#pragma omp for schedule(static)
      for (int i = 0; i < x.n; ++i) {
        detail::im2col(x.sample(i), in_ch, x.h, x.w, k, stride, pad, oh, ow, col.data());
        gemm(weight.data(), col.data(), y.sample(i), out_ch, rows, oh * ow);
        T* ys = y.sample(i);
        for (int oc = 0; oc < out_ch; ++oc) {
          T b = bias[oc];
          T* row = ys + static_cast<size_t>(oc) * oh * ow;
          for (int p = 0; p < oh * ow; ++p) row[p] += b;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const Tensor<T>& x = x_cache;
    const int oh = dy.h, ow = dy.w;
    const int rows = in_ch * k * k;
    const size_t csz = static_cast<size_t>(rows) * oh * ow;
    Tensor<T> dx;
    if (need_dx) dx = Tensor<T>(x.n, in_ch, x.h, x.w);

    // per-sample weight grads are reduced in sample order afterwards so the
    // result does not depend on the thread count
    std::vector<std::vector<T>> dws(x.n), dbs(x.n);
#pragma omp parallel
    {
      std::vector<T> col(csz), dcol(need_dx ? csz : 0);
#pragma omp for schedule(static)
      for (int i = 0; i < x.n; ++i) {
        detail::im2col(x.sample(i), in_ch, x.h, x.w, k, stride, pad, oh, ow, col.data());
        dws[i].assign(weight.size(), T(0));
        dbs[i].assign(bias.size(), T(0));
        gemm_nt(dy.sample(i), col.data(), dws[i].data(), out_ch, oh * ow, rows);
        const T* dys = dy.sample(i);
        for (int oc = 0; oc < out_ch; ++oc) {
          T acc = T(0);
          const T* row = dys + static_cast<size_t>(oc) * oh * ow;
          for (int p = 0; p < oh * ow; ++p) acc += row[p];
          dbs[i][oc] = acc;
        }
        if (need_dx) {
          gemm_tn(weight.data(), dy.sample(i), dcol.data(), rows, out_ch, oh * ow);
          detail::col2im(dcol.data(), in_ch, x.h, x.w, k, stride, pad, oh, ow, dx.sample(i));
        }
      }
    }
    for (int i = 0; i < x.n; ++i) {
      for (size_t j = 0; j < weight.size(); ++j) gweight[j] += dws[i][j];
      for (size_t j = 0; j < bias.size(); ++j) gbias[j] += dbs[i][j];
    }
    return dx;
  }

  void collect(const std::string& prefix, ParamSet<T>& out) {
    out.push_back({prefix + ".weight", {out_ch, in_ch, k, k}, &weight, &gweight});
    out.push_back({prefix + ".bias", {out_ch}, &bias, &gbias});
  }
};

// Transposed convolution with kernel == stride (non-overlapping upsampling).
// Weight layout: [in_ch][out_ch*k*k] row-major, bias [out_ch].
template <typename T>
struct ConvTranspose2d {
  int in_ch = 0, out_ch = 0, k = 2;
  std::vector<T> weight, bias, gweight, gbias;
  Tensor<T> x_cache;

  ConvTranspose2d() = default;
  ConvTranspose2d(int in_c, int out_c, int kernel = 2)
      : in_ch(in_c), out_ch(out_c), k(kernel) {
    weight.assign(static_cast<size_t>(in_ch) * out_ch * k * k, T(0));
    bias.assign(out_ch, T(0));
    gweight.assign(weight.size(), T(0));
    gbias.assign(bias.size(), T(0));
  }

  void init(Rng& rng) { he_uniform_fill(weight, in_ch * k * k, rng); }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c != in_ch)
      throw std::runtime_error("conv-transpose channel mismatch: got " + x.shape_str());
    x_cache = x;
    const int oh = x.h * k, ow = x.w * k;
    Tensor<T> y(x.n, out_ch, oh, ow);
    const int rows = out_ch * k * k;
#pragma omp parallel
    {
      std::vector<T> ycol(static_cast<size_t>(rows) * x.h * x.w);
#pragma omp for schedule(static)
      for (int i = 0; i < x.n; ++i) {
        // ycol (out*k*k x HW) = W^T (out*k*k x in) * x_i (in x HW)
        gemm_tn(weight.data(), x.sample(i), ycol.data(), rows, in_ch, x.h * x.w);
        T* ys = y.sample(i);
        for (int oc = 0; oc < out_ch; ++oc) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const T* src = ycol.data() +
                             (static_cast<size_t>(oc) * k * k + ky * k + kx) *
                                 (static_cast<size_t>(x.h) * x.w);
              for (int iy = 0; iy < x.h; ++iy) {
                T* dst = ys + (static_cast<size_t>(oc) * oh + iy * k + ky) * ow + kx;
                for (int ix = 0; ix < x.w; ++ix) dst[ix * k] = src[iy * x.w + ix] + bias[oc];
              }
            }
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const Tensor<T>& x = x_cache;
    const int rows = out_ch * k * k;
    Tensor<T> dx(x.n, in_ch, x.h, x.w);
    std::vector<std::vector<T>> dws(x.n), dbs(x.n);
#pragma omp parallel
    {
      std::vector<T> dycol(static_cast<size_t>(rows) * x.h * x.w);
#pragma omp for schedule(static)
      for (int i = 0; i < x.n; ++i) {
        const T* dys = dy.sample(i);
        const int oh = x.h * k, ow = x.w * k;
        for (int oc = 0; oc < out_ch; ++oc) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              T* dst = dycol.data() +
                       (static_cast<size_t>(oc) * k * k + ky * k + kx) *
                           (static_cast<size_t>(x.h) * x.w);
              for (int iy = 0; iy < x.h; ++iy) {
                const T* src = dys + (static_cast<size_t>(oc) * oh + iy * k + ky) * ow + kx;
                for (int ix = 0; ix < x.w; ++ix) dst[iy * x.w + ix] = src[ix * k];
              }
            }
          }
        }
        dws[i].assign(weight.size(), T(0));
        dbs[i].assign(bias.size(), T(0));
        // dW (in x out*k*k) = x_i (in x HW) * dycol^T (HW x out*k*k)
        gemm_nt(x.sample(i), dycol.data(), dws[i].data(), in_ch, x.h * x.w, rows);
        for (int oc = 0; oc < out_ch; ++oc) {
          T acc = T(0);
          const T* row = dys + static_cast<size_t>(oc) * x.h * k * x.w * k;
          for (int p = 0; p < x.h * k * x.w * k; ++p) acc += row[p];
          dbs[i][oc] = acc;
        }
        // dx (in x HW) = W (in x out*k*k) * dycol (out*k*k x HW)
        gemm(weight.data(), dycol.data(), dx.sample(i), in_ch, rows, x.h * x.w);
      }
    }
    for (int i = 0; i < x.n; ++i) {
      for (size_t j = 0; j < weight.size(); ++j) gweight[j] += dws[i][j];
      for (size_t j = 0; j < bias.size(); ++j) gbias[j] += dbs[i][j];
    }
    return dx;
  }

  void collect(const std::string& prefix, ParamSet<T>& out) {
    out.push_back({prefix + ".weight", {in_ch, out_ch, k, k}, &weight, &gweight});
    out.push_back({prefix + ".bias", {out_ch}, &bias, &gbias});
  }
};

// Instance normalization with learned per-channel scale and shift.
template <typename T>
struct InstanceNorm {
  int ch = 0;
  T eps = static_cast<T>(1e-5);
  std::vector<T> gamma, beta, ggamma, gbeta;

  Tensor<T> xhat_cache;
  std::vector<T> inv_std_cache;  // one per (n, c)

  InstanceNorm() = default;
  explicit InstanceNorm(int channels) : ch(channels) {
    gamma.assign(ch, T(1));
    beta.assign(ch, T(0));
    ggamma.assign(ch, T(0));
    gbeta.assign(ch, T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    const int hw = x.hw();
    Tensor<T> y(x.n, x.c, x.h, x.w);
    xhat_cache = Tensor<T>(x.n, x.c, x.h, x.w);
    inv_std_cache.assign(static_cast<size_t>(x.n) * x.c, T(0));
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < x.n; ++i) {
      for (int c = 0; c < x.c; ++c) {
        const T* xs = x.sample(i) + static_cast<size_t>(c) * hw;
        T* xh = xhat_cache.sample(i) + static_cast<size_t>(c) * hw;
        T* ys = y.sample(i) + static_cast<size_t>(c) * hw;
        T mean = T(0);
        for (int p = 0; p < hw; ++p) mean += xs[p];
        mean /= hw;
        T var = T(0);
        for (int p = 0; p < hw; ++p) {
          T d = xs[p] - mean;
          var += d * d;
        }
        var /= hw;
        const T inv_std = T(1) / std::sqrt(var + eps);
        inv_std_cache[static_cast<size_t>(i) * x.c + c] = inv_std;
        const T g = gamma[c], b = beta[c];
        for (int p = 0; p < hw; ++p) {
          xh[p] = (xs[p] - mean) * inv_std;
          ys[p] = g * xh[p] + b;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const Tensor<T>& xh = xhat_cache;
    const int hw = dy.hw();
    Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < dy.n; ++i) {
      for (int c = 0; c < dy.c; ++c) {
        const T* dys = dy.sample(i) + static_cast<size_t>(c) * hw;
        const T* xhs = xh.sample(i) + static_cast<size_t>(c) * hw;
        T* dxs = dx.sample(i) + static_cast<size_t>(c) * hw;
        T sum_dy = T(0), sum_dy_xh = T(0);
        for (int p = 0; p < hw; ++p) {
          sum_dy += dys[p];
          sum_dy_xh += dys[p] * xhs[p];
        }
        const T mean_dy = sum_dy / hw;
        const T mean_dy_xh = sum_dy_xh / hw;
        const T g = gamma[c] * inv_std_cache[static_cast<size_t>(i) * dy.c + c];
        for (int p = 0; p < hw; ++p) {
          dxs[p] = g * (dys[p] - mean_dy - xhs[p] * mean_dy_xh);
        }
      }
    }
    // channel grads reduced serially in (c, n) order
    for (int c = 0; c < dy.c; ++c) {
      T sg = T(0), sb = T(0);
      for (int i = 0; i < dy.n; ++i) {
        const T* dys = dy.sample(i) + static_cast<size_t>(c) * hw;
        const T* xhs = xh.sample(i) + static_cast<size_t>(c) * hw;
        for (int p = 0; p < hw; ++p) {
          sg += dys[p] * xhs[p];
          sb += dys[p];
        }
      }
      ggamma[c] += sg;
      gbeta[c] += sb;
    }
    return dx;
  }

  void collect(const std::string& prefix, ParamSet<T>& out) {
    out.push_back({prefix + ".gamma", {ch}, &gamma, &ggamma});
    out.push_back({prefix + ".beta", {ch}, &beta, &gbeta});
  }
};

template <typename T>
struct LeakyRelu {
  T slope = static_cast<T>(0.01);
  Tensor<T> y_cache;

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y(x.n, x.c, x.h, x.w);
    const size_t sz = x.size();
#pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(sz); ++p) {
      y.v[p] = x.v[p] > T(0) ? x.v[p] : slope * x.v[p];
    }
    y_cache = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const Tensor<T>& y = y_cache;
    Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
    const size_t sz = dy.size();
#pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(sz); ++p) {
      dx.v[p] = y.v[p] > T(0) ? dy.v[p] : slope * dy.v[p];
    }
    return dx;
  }
};

// Fully connected layer on (n, features) tensors.
template <typename T>
struct Linear {
  int in = 0, out = 0;
  std::vector<T> weight, bias, gweight, gbias;  // weight (out x in)
  Tensor<T> x_cache;

  Linear() = default;
  Linear(int in_, int out_) : in(in_), out(out_) {
    weight.assign(static_cast<size_t>(out) * in, T(0));
    bias.assign(out, T(0));
    gweight.assign(weight.size(), T(0));
    gbias.assign(bias.size(), T(0));
  }

  void init(Rng& rng) { he_uniform_fill(weight, in, rng); }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c != in || x.h != 1 || x.w != 1)
      throw std::runtime_error("linear input mismatch: got " + x.shape_str());
    x_cache = x;
    Tensor<T> y = Tensor<T>::vec(x.n, out);
    gemm_nt(x.data(), weight.data(), y.data(), x.n, in, out);
    for (int i = 0; i < x.n; ++i)
      for (int o = 0; o < out; ++o) y.v[static_cast<size_t>(i) * out + o] += bias[o];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const Tensor<T>& x = x_cache;
    // dW (out x in) += dy^T (out x n) * x (n x in)
    gemm_tn(dy.data(), x.data(), gweight.data(), out, x.n, in, /*accumulate=*/true);
    for (int i = 0; i < x.n; ++i)
      for (int o = 0; o < out; ++o) gbias[o] += dy.v[static_cast<size_t>(i) * out + o];
    Tensor<T> dx = Tensor<T>::vec(x.n, in);
    gemm(dy.data(), weight.data(), dx.data(), x.n, out, in);
    return dx;
  }

  void collect(const std::string& prefix, ParamSet<T>& out_set) {
    out_set.push_back({prefix + ".weight", {out, in}, &weight, &gweight});
    out_set.push_back({prefix + ".bias", {out}, &bias, &gbias});
  }
};

}  // namespace dcaseg
