#pragma once

#include <vector>

#include "dcaseg/layers.hpp"
#include "dcaseg/plan.hpp"

namespace dcaseg {

// conv3x3 -> instance norm -> leaky ReLU
template <typename T>
struct ConvBlock {
  Conv2d<T> conv;
  InstanceNorm<T> norm;
  LeakyRelu<T> act;

  ConvBlock() = default;
  ConvBlock(int in_c, int out_c, int stride)
      : conv(in_c, out_c, 3, stride), norm(out_c) {}

  Tensor<T> forward(const Tensor<T>& x) { return act.forward(norm.forward(conv.forward(x))); }
  Tensor<T> backward(const Tensor<T>& dy) {
    return conv.backward(norm.backward(act.backward(dy)));
  }
  void init(Rng& rng) { conv.init(rng); }
  void collect(const std::string& prefix, ParamSet<T>& out) {
    conv.collect(prefix + ".conv", out);
    norm.collect(prefix + ".norm", out);
  }
};

// Encoder-decoder segmentation network with skip connections. Stage s of the
// encoder runs at patch/2^s; downsampling is the strided first conv of each
// stage below the top. The decoder mirrors it with transposed-conv
// upsampling and skip concatenation, ending in a full-resolution feature map
// (pre_head) and a 1x1-conv logits head.
template <typename T>
struct Backbone {
  struct EncoderStage {
    ConvBlock<T> block1, block2;
  };
  struct DecoderStage {
    ConvTranspose2d<T> up;
    ConvBlock<T> block1, block2;
  };

  int depth = 0;
  std::vector<int> channels;  // per encoder stage, size depth+1
  std::vector<EncoderStage> encoder;
  std::vector<DecoderStage> decoder;  // decoder[j] lifts stage depth-j to depth-j-1
  Conv2d<T> head;                     // 1x1 -> num_classes

  // forward caches
  std::vector<Tensor<T>> enc_features;  // post-stage feature maps, s = 0..depth
  Tensor<T> pre_head;

  Backbone() = default;

  explicit Backbone(const PlanConfig& plan) {
    plan.validate();
    depth = plan.depth;
    channels = plan.stage_channels();
    encoder.resize(depth + 1);
    encoder[0].block1 = ConvBlock<T>(plan.in_channels, channels[0], 1);
    encoder[0].block2 = ConvBlock<T>(channels[0], channels[0], 1);
    for (int s = 1; s <= depth; ++s) {
      encoder[s].block1 = ConvBlock<T>(channels[s - 1], channels[s], 2);
      encoder[s].block2 = ConvBlock<T>(channels[s], channels[s], 1);
    }
    decoder.resize(depth);
    for (int j = 0; j < depth; ++j) {
      const int from = channels[depth - j], to = channels[depth - j - 1];
      decoder[j].up = ConvTranspose2d<T>(from, to, 2);
      decoder[j].block1 = ConvBlock<T>(2 * to, to, 1);
      decoder[j].block2 = ConvBlock<T>(to, to, 1);
    }
    head = Conv2d<T>(channels[0], plan.num_classes, 1, 1);
    encoder[0].block1.conv.need_dx = false;
  }

  void init(Rng& rng) {
    for (auto& st : encoder) {
      st.block1.init(rng);
      st.block2.init(rng);
    }
    for (auto& st : decoder) {
      st.up.init(rng);
      st.block1.init(rng);
      st.block2.init(rng);
    }
    head.init(rng);
  }

  struct Forward {
    const std::vector<Tensor<T>>* enc_features;  // stages 0..depth
    Tensor<T> pre_head;                          // (n, base, H, W)
    Tensor<T> baseline_logits;                   // (n, classes, H, W)
  };

  Forward forward(const Tensor<T>& x) {
    enc_features.assign(depth + 1, Tensor<T>());
    Tensor<T> cur = encoder[0].block2.forward(encoder[0].block1.forward(x));
    enc_features[0] = cur;
    for (int s = 1; s <= depth; ++s) {
      cur = encoder[s].block2.forward(encoder[s].block1.forward(cur));
      enc_features[s] = cur;
    }
    for (int j = 0; j < depth; ++j) {
      Tensor<T> up = decoder[j].up.forward(cur);
      Tensor<T> cat = concat_channels(up, enc_features[depth - j - 1]);
      cur = decoder[j].block2.forward(decoder[j].block1.forward(cat));
    }
    pre_head = cur;
    Forward out;
    out.enc_features = &enc_features;
    out.pre_head = pre_head;
    out.baseline_logits = head.forward(pre_head);
    return out;
  }

  // d_pre_head / d_logits may be empty; d_enc_extra carries gradients that
  // external consumers (the dynamic heads) push into encoder stage outputs
  // and may be empty or hold empty slots.
  Tensor<T> backward(const Tensor<T>& d_pre_head_in, const Tensor<T>& d_logits,
                     std::vector<Tensor<T>> d_enc_extra = {}) {
    d_enc_extra.resize(depth + 1);

    Tensor<T> d_pre = d_pre_head_in;
    if (!d_logits.empty()) accumulate_into(d_pre, head.backward(d_logits));
    if (d_pre.empty()) d_pre = Tensor<T>(pre_head.n, pre_head.c, pre_head.h, pre_head.w);

    // decoder in reverse
    Tensor<T> cur = d_pre;
    for (int j = depth - 1; j >= 0; --j) {
      Tensor<T> d_cat = decoder[j].block1.backward(decoder[j].block2.backward(cur));
      auto [d_up, d_skip] = split_channels(d_cat, decoder[j].up.out_ch);
      accumulate_into(d_enc_extra[depth - j - 1], d_skip);
      cur = decoder[j].up.backward(d_up);
    }

    // encoder in reverse; cur currently holds the gradient flowing into the
    // deepest stage output
    for (int s = depth; s >= 0; --s) {
      if (!d_enc_extra[s].empty()) accumulate_into(cur, d_enc_extra[s]);
      cur = encoder[s].block1.backward(encoder[s].block2.backward(cur));
    }
    return cur;  // empty unless input grads are enabled
  }

  void collect(ParamSet<T>& out) {
    for (int s = 0; s <= depth; ++s) {
      encoder[s].block1.collect("backbone.enc" + std::to_string(s) + ".b1", out);
      encoder[s].block2.collect("backbone.enc" + std::to_string(s) + ".b2", out);
    }
    for (int j = 0; j < depth; ++j) {
      decoder[j].up.collect("backbone.dec" + std::to_string(j) + ".up", out);
      decoder[j].block1.collect("backbone.dec" + std::to_string(j) + ".b1", out);
      decoder[j].block2.collect("backbone.dec" + std::to_string(j) + ".b2", out);
    }
    head.collect("backbone.head", out);
  }
};

}  // namespace dcaseg
