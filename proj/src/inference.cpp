#include "dcaseg/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dcaseg/checkpoint.hpp"
#include "json.hpp"

namespace dcaseg {

PatchPredictor make_model_predictor(SegModel<float>& model) {
  return [&model](const Tensor<float>& x) {
    auto out = model.forward(x);
    return softmax_channels(out.logits);
  };
}

std::vector<double> gaussian_weights(int patch_size, double sigma) {
  if (patch_size < 1) throw std::runtime_error("gaussian_weights needs patch_size >= 1");
  std::vector<double> w(static_cast<size_t>(patch_size) * patch_size);
  const double c = (patch_size - 1) / 2.0;
  const double denom = 2.0 * sigma * sigma;
  for (int y = 0; y < patch_size; ++y) {
    for (int x = 0; x < patch_size; ++x) {
      const double dy = y - c, dx = x - c;
      double v = std::exp(-(dy * dy + dx * dx) / denom);
      w[static_cast<size_t>(y) * patch_size + x] = std::max(v, 1e-8);
    }
  }
  return w;
}

TileGrid make_tile_grid(int h, int w, int patch, int step) {
  if (h < patch || w < patch)
    throw std::runtime_error("tile grid needs image >= patch (pad first)");
  if (step < 1) throw std::runtime_error("tile step must be >= 1");
  auto axis = [&](int size) {
    std::vector<int> o;
    for (int p = 0; p + patch < size; p += step) o.push_back(p);
    o.push_back(size - patch);  // clamp the last tile to the border
    return o;
  };
  TileGrid grid;
  grid.patch = patch;
  grid.step = step;
  for (int oy : axis(h))
    for (int ox : axis(w)) grid.origins.emplace_back(oy, ox);
  return grid;
}

namespace {

// flip helpers on (n, c, h, w) tensors
Tensor<float> flip_tensor(const Tensor<float>& x, bool fh, bool fv) {
  Tensor<float> y(x.n, x.c, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      for (int yy = 0; yy < x.h; ++yy) {
        const int sy = fv ? x.h - 1 - yy : yy;
        for (int xx = 0; xx < x.w; ++xx) {
          const int sx = fh ? x.w - 1 - xx : xx;
          y.at(i, c, yy, xx) = x.at(i, c, sy, sx);
        }
      }
    }
  }
  return y;
}

Image pad_image(const Image& img, int min_h, int min_w, int& top, int& left) {
  if (img.h >= min_h && img.w >= min_w) {
    top = left = 0;
    return img;
  }
  const int nh = std::max(img.h, min_h), nw = std::max(img.w, min_w);
  top = (nh - img.h) / 2;
  left = (nw - img.w) / 2;
  Image out(nh, nw, img.c, 0.f);
  for (int c = 0; c < img.c; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) out.at(c, y + top, x + left) = img.at(c, y, x);
  return out;
}

}  // namespace

Tensor<float> tta_mirror(const PatchPredictor& predict, const Tensor<float>& patch) {
  if (patch.n != 1) throw std::runtime_error("tta_mirror expects a single patch");
  const bool flips[4][2] = {{false, false}, {true, false}, {false, true}, {true, true}};

  // run the four variants as one batch
  Tensor<float> batch(4, patch.c, patch.h, patch.w);
  for (int v = 0; v < 4; ++v) {
    Tensor<float> f = flip_tensor(patch, flips[v][0], flips[v][1]);
    std::copy(f.v.begin(), f.v.end(), batch.sample(v));
  }
  Tensor<float> probs = predict(batch);

  Tensor<float> out(1, probs.c, patch.h, patch.w);
  std::vector<double> acc(out.size(), 0.0);
  for (int v = 0; v < 4; ++v) {
    Tensor<float> single(1, probs.c, patch.h, patch.w);
    std::copy(probs.sample(v), probs.sample(v) + probs.chw(), single.data());
    Tensor<float> unflipped = flip_tensor(single, flips[v][0], flips[v][1]);
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += unflipped.v[i];
  }
  for (size_t i = 0; i < acc.size(); ++i) out.v[i] = static_cast<float>(acc[i] / 4.0);
  return out;
}

PredictionMap sliding_window(const Image& image, const PatchPredictor& predict,
                             int patch_size, int num_classes,
                             const InferenceOptions& opts) {
  int top = 0, left = 0;
  const Image padded = pad_image(image, patch_size, patch_size, top, left);
  const int step = opts.step > 0 ? opts.step : std::max(1, patch_size / 2);
  const TileGrid grid = make_tile_grid(padded.h, padded.w, patch_size, step);
  const std::vector<double> weights =
      gaussian_weights(patch_size, patch_size * opts.sigma_scale);

  std::vector<double> acc(static_cast<size_t>(num_classes) * padded.h * padded.w, 0.0);
  std::vector<double> wacc(static_cast<size_t>(padded.h) * padded.w, 0.0);

  Tensor<float> tile(1, padded.c, patch_size, patch_size);
  for (const auto& [oy, ox] : grid.origins) {
    for (int c = 0; c < padded.c; ++c)
      for (int y = 0; y < patch_size; ++y)
        for (int x = 0; x < patch_size; ++x)
          tile.at(0, c, y, x) = padded.at(c, oy + y, ox + x);

    Tensor<float> probs = opts.tta ? tta_mirror(predict, tile) : predict(tile);
    if (probs.c != num_classes || probs.h != patch_size || probs.w != patch_size)
      throw std::runtime_error("predictor output shape mismatch: " + probs.shape_str());

    for (int y = 0; y < patch_size; ++y) {
      for (int x = 0; x < patch_size; ++x) {
        const double w = weights[static_cast<size_t>(y) * patch_size + x];
        const size_t px = static_cast<size_t>(oy + y) * padded.w + (ox + x);
        wacc[px] += w;
        for (int c = 0; c < num_classes; ++c) {
          acc[static_cast<size_t>(c) * padded.h * padded.w + px] +=
              w * probs.at(0, c, y, x);
        }
      }
    }
  }

  PredictionMap out(image.h, image.w, num_classes);
  for (int c = 0; c < num_classes; ++c) {
    for (int y = 0; y < image.h; ++y) {
      for (int x = 0; x < image.w; ++x) {
        const size_t px = static_cast<size_t>(y + top) * padded.w + (x + left);
        out.at(c, y, x) = static_cast<float>(
            acc[static_cast<size_t>(c) * padded.h * padded.w + px] / wacc[px]);
      }
    }
  }
  return out;
}

PredictionMap ensemble(const std::vector<PatchPredictor>& models, const Image& image,
                       int patch_size, int num_classes, const InferenceOptions& opts) {
  if (models.empty()) throw std::runtime_error("ensemble needs at least one model");
  std::vector<double> acc;
  PredictionMap out;
  for (const PatchPredictor& m : models) {
    PredictionMap p = sliding_window(image, m, patch_size, num_classes, opts);
    if (acc.empty()) {
      acc.assign(p.data.size(), 0.0);
      out = Image(p.h, p.w, p.c);
    }
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += p.data[i];
  }
  const double inv = 1.0 / static_cast<double>(models.size());
  for (size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<float>(acc[i] * inv);
  return out;
}

Mask mask_from_probs(const PredictionMap& probs, double threshold) {
  Mask m(probs.h, probs.w);
  const size_t hw = probs.pixels();
  if (probs.c == 2) {
    for (size_t p = 0; p < hw; ++p)
      m.data[p] = probs.data[hw + p] >= threshold ? 1 : 0;
    return m;
  }
  for (size_t p = 0; p < hw; ++p) {
    int best = 0;
    float bv = probs.data[p];
    for (int c = 1; c < probs.c; ++c) {
      const float v = probs.data[static_cast<size_t>(c) * hw + p];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    m.data[p] = static_cast<uint8_t>(best);
  }
  return m;
}

std::vector<std::unique_ptr<SegModel<float>>> load_fold_models(
    const std::vector<std::filesystem::path>& checkpoints, PlanConfig* plan_out) {
  if (checkpoints.empty()) throw std::runtime_error("no checkpoints given");
  std::vector<std::unique_ptr<SegModel<float>>> models;
  std::string plan_json;
  for (const auto& path : checkpoints) {
    Checkpoint ckpt = load_checkpoint(path);
    if (plan_json.empty()) {
      plan_json = ckpt.plan.to_json();
      if (plan_out) *plan_out = ckpt.plan;
    } else if (ckpt.plan.to_json() != plan_json) {
      throw std::runtime_error("plan mismatch across checkpoints: " + path.string());
    }
    auto model = std::make_unique<SegModel<float>>(ckpt.plan);
    ParamSet<float> params = model->params();
    load_into(ckpt, params);
    models.push_back(std::move(model));
  }
  return models;
}

void write_probability_map(const PredictionMap& probs, const std::filesystem::path& raw_path,
                           const std::filesystem::path& sidecar_path,
                           const std::vector<std::string>& class_names) {
  std::ofstream raw(raw_path, std::ios::binary);
  if (!raw) throw std::runtime_error("cannot write probability map: " + raw_path.string());
  // stored HWC so rows stream naturally
  const size_t hw = probs.pixels();
  std::vector<float> row(probs.c);
  for (size_t p = 0; p < hw; ++p) {
    for (int c = 0; c < probs.c; ++c) row[c] = probs.data[static_cast<size_t>(c) * hw + p];
    raw.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  nlohmann::json side;
  side["shape"] = {probs.h, probs.w, probs.c};
  side["order"] = "HWC";
  side["dtype"] = "float32";
  side["class_names"] = class_names;
  std::ofstream js(sidecar_path);
  js << side.dump(2) << "\n";
}

}  // namespace dcaseg
