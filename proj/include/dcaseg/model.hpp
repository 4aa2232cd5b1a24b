#pragma once

#include <optional>
#include <vector>

#include "dcaseg/backbone.hpp"
#include "dcaseg/dcac.hpp"
#include "dcaseg/plan.hpp"
#include "dcaseg/sampler.hpp"

namespace dcaseg {

// Full segmentation model: encoder-decoder backbone, and when enabled the
// domain-adaptive and content-adaptive dynamic heads applied sequentially
// to the decoder output.
template <typename T>
struct SegModel {
  PlanConfig plan;
  Backbone<T> backbone;

  // present when plan.dcac_enabled
  DomainPredictor<T> predictor;
  KernelController<T> dac_controller;
  KernelController<T> cac_controller;
  DynamicConv<T> dac_head;
  DynamicConv<T> cac_head;

  // forward caches for backward
  Tensor<T> domain_probs_cache;
  Tensor<T> bottleneck_pooled_cache;

  explicit SegModel(const PlanConfig& p) : plan(p), backbone(p) {
    if (plan.dcac_enabled) {
      const std::vector<int> ch = plan.stage_channels();
      int cond_dim = 0;
      for (int c : ch) cond_dim += c;
      predictor = DomainPredictor<T>(cond_dim, plan.predictor_hidden, plan.num_domains);

      DynamicHeadSpec dac_spec;
      for (int l = 0; l < plan.dac_layers; ++l)
        dac_spec.layers.push_back({ch[0], ch[0], plan.dynamic_kernel_size});
      dac_controller = KernelController<T>(plan.num_domains, dac_spec);
      dac_head = DynamicConv<T>(dac_spec);

      DynamicHeadSpec cac_spec;
      for (int l = 0; l < plan.cac_layers; ++l) {
        const int out_c = (l + 1 == plan.cac_layers) ? plan.num_classes : ch[0];
        cac_spec.layers.push_back({ch[0], out_c, plan.dynamic_kernel_size});
      }
      cac_controller = KernelController<T>(ch[plan.depth], cac_spec);
      cac_head = DynamicConv<T>(cac_spec);
    }
  }

  void init(Rng& rng) {
    backbone.init(rng);
    if (plan.dcac_enabled) {
      predictor.init(rng);
      dac_controller.init(rng);
      cac_controller.init(rng);
    }
  }

  struct Output {
    Tensor<T> logits;           // segmentation logits used by the loss
    Tensor<T> baseline_logits;  // plain 1x1-conv head output
    Tensor<T> domain_probs;     // (n, K), empty when dcac is off
  };

  Output forward(const Tensor<T>& x) {
    if (x.h != plan.patch_size || x.w != plan.patch_size)
      throw std::runtime_error("input spatial size " + x.shape_str() +
                               " does not match plan patch size " +
                               std::to_string(plan.patch_size));
    auto bb = backbone.forward(x);
    Output out;
    out.baseline_logits = bb.baseline_logits;
    if (!plan.dcac_enabled) {
      out.logits = bb.baseline_logits;
      return out;
    }

    Tensor<T> pooled = pool_concat(*bb.enc_features);
    out.domain_probs = predictor.forward(pooled);
    domain_probs_cache = out.domain_probs;

    Tensor<T> dac_cond = out.domain_probs;
    Tensor<T> dac_flat = dac_controller.generate(dac_cond);
    Tensor<T> dac_out = dac_head.forward(bb.pre_head, dac_flat);

    std::vector<Tensor<T>> deepest = {(*bb.enc_features)[plan.depth]};
    bottleneck_pooled_cache = pool_concat(deepest);
    Tensor<T> cac_flat = cac_controller.generate(bottleneck_pooled_cache);
    out.logits = cac_head.forward(dac_out, cac_flat);
    return out;
  }

  // dlogits: gradient on Output::logits. ddomain_probs: gradient pushed into
  // the domain encoding by the domain classification loss (may be empty).
  void backward(const Tensor<T>& dlogits, const Tensor<T>& ddomain_probs = {}) {
    if (!plan.dcac_enabled) {
      backbone.backward(Tensor<T>(), dlogits);
      return;
    }

    std::vector<Tensor<T>> d_enc(plan.depth + 1);

    auto [d_dac_out, d_cac_flat] = cac_head.backward(dlogits);
    Tensor<T> d_bottleneck_pooled = cac_controller.backward(d_cac_flat);
    {
      std::vector<Tensor<T>> deepest = {backbone.enc_features[plan.depth]};
      std::vector<Tensor<T>> g = pool_concat_backward(deepest, d_bottleneck_pooled);
      accumulate_into(d_enc[plan.depth], g[0]);
    }

    auto [d_pre_head, d_dac_flat] = dac_head.backward(d_dac_out);
    Tensor<T> d_probs = dac_controller.backward(d_dac_flat);
    if (plan.stop_gradient_domain_encoding) d_probs.zero();
    if (!ddomain_probs.empty()) accumulate_into(d_probs, ddomain_probs);

    Tensor<T> d_pooled = predictor.backward(d_probs);
    {
      std::vector<Tensor<T>> g = pool_concat_backward(backbone.enc_features, d_pooled);
      for (int s = 0; s <= plan.depth; ++s) accumulate_into(d_enc[s], g[s]);
    }

    backbone.backward(d_pre_head, Tensor<T>(), std::move(d_enc));
  }

  ParamSet<T> params() {
    ParamSet<T> set;
    backbone.collect(set);
    if (plan.dcac_enabled) {
      predictor.collect("dcac.predictor", set);
      dac_controller.collect("dcac.dac_controller", set);
      cac_controller.collect("dcac.cac_controller", set);
    }
    return set;
  }

  void zero_grad() {
    ParamSet<T> set = params();
    zero_grads(set);
  }
};

// Assembles a batch tensor from patches.
template <typename T>
Tensor<T> batch_from_patches(const std::vector<Patch>& patches) {
  if (patches.empty()) throw std::runtime_error("empty batch");
  const Image& first = patches[0].image;
  Tensor<T> x(static_cast<int>(patches.size()), first.c, first.h, first.w);
  for (size_t i = 0; i < patches.size(); ++i) {
    const Image& img = patches[i].image;
    for (size_t j = 0; j < img.data.size(); ++j)
      x.sample(static_cast<int>(i))[j] = static_cast<T>(img.data[j]);
  }
  return x;
}

}  // namespace dcaseg
