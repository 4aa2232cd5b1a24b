#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "dcaseg/image.hpp"
#include "dcaseg/model.hpp"

namespace dcaseg {

// A prediction map is a planar (num_classes, H, W) image of per-pixel class
// probabilities; each pixel column sums to 1.
using PredictionMap = Image;

// Patch-level predictor: (n, 3, P, P) input -> (n, C, P, P) per-pixel class
// probabilities. Toy predictors in tests satisfy the same contract.
using PatchPredictor = std::function<Tensor<float>(const Tensor<float>&)>;

// Wraps a model into a probability predictor (softmax over its logits).
PatchPredictor make_model_predictor(SegModel<float>& model);

// Separable Gaussian tile weighting centered on the patch, analytic maximum
// 1 at the center, floor-clamped at 1e-8.
std::vector<double> gaussian_weights(int patch_size, double sigma);

struct TileGrid {
  int patch = 0;
  int step = 0;
  std::vector<std::pair<int, int>> origins;  // (y, x), covers every pixel
};

// Origins spaced by step with the final tile clamped to the image border.
TileGrid make_tile_grid(int h, int w, int patch, int step);

struct InferenceOptions {
  bool tta = true;
  int step = 0;             // 0: defaults to patch/2
  double sigma_scale = 0.125;  // sigma = patch * sigma_scale
};

// Mirror test-time augmentation: mean probability over {id, flip-h, flip-v,
// flip-hv}, each un-flipped before averaging. patch is (1, 3, P, P).
Tensor<float> tta_mirror(const PatchPredictor& predict, const Tensor<float>& patch);

// Gaussian-weighted sliding-window prediction over an arbitrary-size image;
// images smaller than the patch are symmetrically zero-padded and the
// output cropped back.
PredictionMap sliding_window(const Image& image, const PatchPredictor& predict,
                             int patch_size, int num_classes,
                             const InferenceOptions& opts = {});

// Mean of per-model prediction maps (softmax averaging).
PredictionMap ensemble(const std::vector<PatchPredictor>& models, const Image& image,
                       int patch_size, int num_classes, const InferenceOptions& opts = {});

// Argmax decision; for the binary case the foreground is taken where
// probs[1] >= threshold (0.5 reproduces argmax).
Mask mask_from_probs(const PredictionMap& probs, double threshold = 0.5);

// Loads checkpoints, verifies their plans agree, and returns ready models.
std::vector<std::unique_ptr<SegModel<float>>> load_fold_models(
    const std::vector<std::filesystem::path>& checkpoints, PlanConfig* plan_out = nullptr);

// Raw float32 probability dump with a JSON sidecar describing shape/order.
void write_probability_map(const PredictionMap& probs, const std::filesystem::path& raw_path,
                           const std::filesystem::path& sidecar_path,
                           const std::vector<std::string>& class_names);

}  // namespace dcaseg
