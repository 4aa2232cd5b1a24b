#pragma once

#include <string>
#include <vector>

#include "dcaseg/layers.hpp"
#include "dcaseg/tensor.hpp"

namespace dcaseg {

// Layer shapes of a dynamic head. The controller emits one flat parameter
// vector per sample that fills these layers in order: for each layer, the
// [out][in*k*k] weight block row-major, then the [out] bias block.
struct DynamicHeadSpec {
  struct Layer {
    int in_ch, out_ch, k;
  };
  std::vector<Layer> layers;

  int param_count() const {
    int total = 0;
    for (const Layer& l : layers) total += l.in_ch * l.out_ch * l.k * l.k + l.out_ch;
    return total;
  }
  void validate() const {
    for (size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].k < 1 || layers[i].k % 2 == 0)
        throw std::runtime_error("dynamic head kernel must be odd and >= 1");
      if (i > 0 && layers[i].in_ch != layers[i - 1].out_ch)
        throw std::runtime_error("dynamic head channel chain mismatch");
    }
  }
};

// Global average pool of each stage feature map, concatenated in stage
// order; output is (n, sum of stage channels).
template <typename T>
Tensor<T> pool_concat(const std::vector<Tensor<T>>& features) {
  if (features.empty()) throw std::runtime_error("pool_concat: no features");
  int total_c = 0;
  for (const auto& f : features) total_c += f.c;
  const int n = features[0].n;
  Tensor<T> out = Tensor<T>::vec(n, total_c);
  int base = 0;
  for (const auto& f : features) {
    const int hw = f.hw();
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < f.c; ++c) {
        const T* src = f.sample(i) + static_cast<size_t>(c) * hw;
        T acc = T(0);
        for (int p = 0; p < hw; ++p) acc += src[p];
        out.v[static_cast<size_t>(i) * total_c + base + c] = acc / hw;
      }
    }
    base += f.c;
  }
  return out;
}

// Backward of pool_concat: spreads dvec/(h*w) uniformly over each map.
template <typename T>
std::vector<Tensor<T>> pool_concat_backward(const std::vector<Tensor<T>>& features,
                                            const Tensor<T>& dvec) {
  std::vector<Tensor<T>> grads;
  grads.reserve(features.size());
  const int total_c = dvec.c;
  int base = 0;
  for (const auto& f : features) {
    Tensor<T> g(f.n, f.c, f.h, f.w);
    const int hw = f.hw();
    for (int i = 0; i < f.n; ++i) {
      for (int c = 0; c < f.c; ++c) {
        const T d = dvec.v[static_cast<size_t>(i) * total_c + base + c] / static_cast<T>(hw);
        T* dst = g.sample(i) + static_cast<size_t>(c) * hw;
        for (int p = 0; p < hw; ++p) dst[p] = d;
      }
    }
    base += f.c;
    grads.push_back(std::move(g));
  }
  return grads;
}

// Two-layer perceptron over the pooled conditioning vector, ending in a
// softmax over the K source domains. The input is normalized per sample
// (stateless layer norm): the raw pooled vector carries a large constant
// offset that stalls the classifier under the shared SGD schedule, while
// the normalized form trains readily. See the finite-difference-checked
// backward below.
template <typename T>
struct DomainPredictor {
  Linear<T> fc1, fc2;
  LeakyRelu<T> act;
  Tensor<T> probs_cache;
  Tensor<T> xhat_cache;
  std::vector<T> inv_std_cache;

  DomainPredictor() = default;
  DomainPredictor(int in_dim, int hidden, int num_domains)
      : fc1(in_dim, hidden), fc2(hidden, num_domains) {}

  void init(Rng& rng) {
    fc1.init(rng);
    fc2.init(rng);
  }

  // (n, in) -> (n, K) simplex rows
  Tensor<T> forward(const Tensor<T>& pooled) {
    Tensor<T> logits = fc2.forward(act.forward(fc1.forward(normalize(pooled))));
    probs_cache = softmax_channels(logits);
    return probs_cache;
  }

  Tensor<T> backward(const Tensor<T>& dprobs) {
    Tensor<T> dlogits = softmax_channels_backward(probs_cache, dprobs);
    Tensor<T> dxhat = fc1.backward(act.backward(fc2.backward(dlogits)));
    return normalize_backward(dxhat);
  }

  void collect(const std::string& prefix, ParamSet<T>& out) {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
  }

 private:
  static constexpr double kEps = 1e-6;

  Tensor<T> normalize(const Tensor<T>& x) {
    const int d = x.c;
    xhat_cache = Tensor<T>::vec(x.n, d);
    inv_std_cache.assign(x.n, T(0));
    for (int i = 0; i < x.n; ++i) {
      const T* src = x.data() + static_cast<size_t>(i) * d;
      T mean = T(0);
      for (int j = 0; j < d; ++j) mean += src[j];
      mean /= d;
      T var = T(0);
      for (int j = 0; j < d; ++j) {
        const T c = src[j] - mean;
        var += c * c;
      }
      var /= d;
      const T inv = T(1) / std::sqrt(var + static_cast<T>(kEps));
      inv_std_cache[i] = inv;
      T* dst = xhat_cache.data() + static_cast<size_t>(i) * d;
      for (int j = 0; j < d; ++j) dst[j] = (src[j] - mean) * inv;
    }
    return xhat_cache;
  }

  Tensor<T> normalize_backward(const Tensor<T>& dy) {
    const int d = dy.c;
    Tensor<T> dx = Tensor<T>::vec(dy.n, d);
    for (int i = 0; i < dy.n; ++i) {
      const T* dys = dy.data() + static_cast<size_t>(i) * d;
      const T* xh = xhat_cache.data() + static_cast<size_t>(i) * d;
      T mean_dy = T(0), mean_dy_xh = T(0);
      for (int j = 0; j < d; ++j) {
        mean_dy += dys[j];
        mean_dy_xh += dys[j] * xh[j];
      }
      mean_dy /= d;
      mean_dy_xh /= d;
      T* dst = dx.data() + static_cast<size_t>(i) * d;
      for (int j = 0; j < d; ++j)
        dst[j] = inv_std_cache[i] * (dys[j] - mean_dy - xh[j] * mean_dy_xh);
    }
    return dx;
  }
};

// Single affine map from a conditioning vector to the flat parameters of a
// dynamic head. Affinity makes convex interpolation of conditioning vectors
// carry over to the generated kernels exactly.
template <typename T>
struct KernelController {
  Linear<T> fc;
  DynamicHeadSpec spec;

  KernelController() = default;
  KernelController(int cond_dim, DynamicHeadSpec spec_) : fc(cond_dim, spec_.param_count()), spec(std::move(spec_)) {
    spec.validate();
  }

  void init(Rng& rng) { fc.init(rng); }

  Tensor<T> generate(const Tensor<T>& conditioning) { return fc.forward(conditioning); }
  Tensor<T> backward(const Tensor<T>& dflat) { return fc.backward(dflat); }

  void collect(const std::string& prefix, ParamSet<T>& out) { fc.collect(prefix, out); }
};

// Applies the layers of a dynamic head using per-sample generated
// parameters; leaky ReLU between layers, none after the last.
template <typename T>
struct DynamicConv {
  DynamicHeadSpec spec;
  T slope = static_cast<T>(0.01);

  // caches
  std::vector<Tensor<T>> layer_inputs;  // z_l, input of layer l
  std::vector<Tensor<T>> preacts;       // a_l, conv output of layer l
  Tensor<T> flat_cache;

  explicit DynamicConv(DynamicHeadSpec s = {}) : spec(std::move(s)) {}

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& flat) {
    spec.validate();
    if (spec.layers.empty()) throw std::runtime_error("dynamic head has no layers");
    if (x.c != spec.layers.front().in_ch)
      throw std::runtime_error("dynamic conv channel mismatch: got " + x.shape_str());
    if (flat.c != spec.param_count())
      throw std::runtime_error("flat parameter width mismatch: " + std::to_string(flat.c) +
                               " vs " + std::to_string(spec.param_count()));
    flat_cache = flat;
    const int L = static_cast<int>(spec.layers.size());
    layer_inputs.assign(L, Tensor<T>());
    preacts.assign(L, Tensor<T>());

    Tensor<T> cur = x;
    int offset = 0;
    for (int l = 0; l < L; ++l) {
      const auto& ly = spec.layers[l];
      layer_inputs[l] = cur;
      Tensor<T> out(cur.n, ly.out_ch, cur.h, cur.w);
      apply_layer(cur, flat, offset, ly, out);
      preacts[l] = out;
      if (l + 1 < L) {
        Tensor<T> a(out.n, out.c, out.h, out.w);
        for (size_t p = 0; p < out.size(); ++p)
          a.v[p] = out.v[p] > T(0) ? out.v[p] : slope * out.v[p];
        cur = std::move(a);
      } else {
        cur = out;
      }
      offset += ly.in_ch * ly.out_ch * ly.k * ly.k + ly.out_ch;
    }
    return cur;
  }

  // returns (dx, dflat)
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& dy) {
    const int L = static_cast<int>(spec.layers.size());
    Tensor<T> dflat(flat_cache.n, flat_cache.c, 1, 1);
    std::vector<int> offsets(L);
    int off = 0;
    for (int l = 0; l < L; ++l) {
      offsets[l] = off;
      off += spec.layers[l].in_ch * spec.layers[l].out_ch * spec.layers[l].k * spec.layers[l].k +
             spec.layers[l].out_ch;
    }

    Tensor<T> d_a = dy;
    for (int l = L - 1; l >= 0; --l) {
      if (l < L - 1) {
        // gradient through the activation applied to preacts[l]
        const Tensor<T>& a = preacts[l];
        Tensor<T> masked(d_a.n, d_a.c, d_a.h, d_a.w);
        for (size_t p = 0; p < d_a.size(); ++p)
          masked.v[p] = a.v[p] > T(0) ? d_a.v[p] : slope * d_a.v[p];
        d_a = std::move(masked);
      }
      d_a = backward_layer(layer_inputs[l], flat_cache, offsets[l], spec.layers[l], d_a, dflat);
    }
    return {std::move(d_a), std::move(dflat)};
  }

 private:
  void apply_layer(const Tensor<T>& x, const Tensor<T>& flat, int offset,
                   const typename DynamicHeadSpec::Layer& ly, Tensor<T>& out) const {
    const int pad = (ly.k - 1) / 2;
    const int rows = ly.in_ch * ly.k * ly.k;
    const int hw = x.hw();
#pragma omp parallel
    {
      std::vector<T> col(static_cast<size_t>(rows) * hw);
#pragma omp for schedule(static)
      for (int i = 0; i < x.n; ++i) {
        const T* W = flat.sample(i) + offset;
        const T* b = W + static_cast<size_t>(ly.out_ch) * rows;
        detail::im2col(x.sample(i), ly.in_ch, x.h, x.w, ly.k, 1, pad, x.h, x.w, col.data());
        gemm(W, col.data(), out.sample(i), ly.out_ch, rows, hw);
        for (int oc = 0; oc < ly.out_ch; ++oc) {
          T* row = out.sample(i) + static_cast<size_t>(oc) * hw;
          for (int p = 0; p < hw; ++p) row[p] += b[oc];
        }
      }
    }
  }

  Tensor<T> backward_layer(const Tensor<T>& x, const Tensor<T>& flat, int offset,
                           const typename DynamicHeadSpec::Layer& ly, const Tensor<T>& dy,
                           Tensor<T>& dflat) const {
    const int pad = (ly.k - 1) / 2;
    const int rows = ly.in_ch * ly.k * ly.k;
    const int hw = x.hw();
    Tensor<T> dx(x.n, ly.in_ch, x.h, x.w);
#pragma omp parallel
    {
      std::vector<T> col(static_cast<size_t>(rows) * hw);
      std::vector<T> dcol(static_cast<size_t>(rows) * hw);
#pragma omp for schedule(static)
      for (int i = 0; i < x.n; ++i) {
        const T* W = flat.sample(i) + offset;
        T* dW = dflat.sample(i) + offset;
        T* db = dW + static_cast<size_t>(ly.out_ch) * rows;
        detail::im2col(x.sample(i), ly.in_ch, x.h, x.w, ly.k, 1, pad, x.h, x.w, col.data());
        // per-sample parameter grads: dW = dy_i * col^T, db = rowsum(dy_i)
        gemm_nt(dy.sample(i), col.data(), dW, ly.out_ch, hw, rows);
        for (int oc = 0; oc < ly.out_ch; ++oc) {
          const T* row = dy.sample(i) + static_cast<size_t>(oc) * hw;
          T acc = T(0);
          for (int p = 0; p < hw; ++p) acc += row[p];
          db[oc] = acc;
        }
        gemm_tn(W, dy.sample(i), dcol.data(), rows, ly.out_ch, hw);
        detail::col2im(dcol.data(), ly.in_ch, x.h, x.w, ly.k, 1, pad, x.h, x.w, dx.sample(i));
      }
    }
    return dx;
  }
};

}  // namespace dcaseg
