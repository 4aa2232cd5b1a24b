#pragma once

#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "dcaseg/image.hpp"
#include "dcaseg/manifest.hpp"
#include "dcaseg/rng.hpp"

namespace dcaseg {

// One training example: image crop, matching mask crop, source domain.
struct Patch {
  Image image;   // (3, P, P), values in [0,1]
  Mask mask;     // (P, P)
  int domain_id = 0;
};

struct AugmentConfig {
  double p_mirror_h = 0.5;
  double p_mirror_v = 0.5;
  double p_rot90 = 0.5;       // on hit, rotates by 90/180/270 uniformly
  double p_intensity = 0.15;  // on hit, multiplies image by s in [lo, hi]
  double intensity_lo = 0.9;
  double intensity_hi = 1.1;
};

// Draws fixed-size patches from manifest samples. Cases are drawn uniformly
// at random; with probability p_foreground the crop is centered on a random
// foreground pixel (when the mask has any). Images smaller than the patch
// are zero-padded symmetrically. Decoded images are cached in memory.
class PatchSampler {
 public:
  PatchSampler(const DatasetManifest& manifest, int patch_size,
               double p_foreground = 1.0 / 3.0);

  // Restricts sampling to the given manifest indices (training split).
  PatchSampler(const DatasetManifest& manifest, std::vector<int> indices,
               int patch_size, double p_foreground = 1.0 / 3.0);

  std::vector<Patch> sample_minibatch(int batch_size, Rng& rng) const;

  // Deterministic center crop/pad of one sample, for validation.
  Patch center_patch(int index) const;

  int patch_size() const { return patch_size_; }
  size_t size() const { return indices_.size(); }

 private:
  struct CacheEntry {
    Image image;
    Mask mask;
    std::vector<int> fg_pixels;  // flat y*w+x indices of mask==1
  };
  const CacheEntry& entry(int manifest_index) const;
  Patch crop(const CacheEntry& e, int domain_id, int cy, int cx) const;

  const DatasetManifest& manifest_;
  std::vector<int> indices_;
  int patch_size_;
  double p_foreground_;
  mutable std::mutex mu_;
  mutable std::unordered_map<int, std::unique_ptr<CacheEntry>> cache_;
};

// Applies mirroring, right-angle rotations (image and mask jointly) and
// multiplicative intensity scaling (image only, clamped to [0,1]).
std::vector<Patch> augment(std::vector<Patch> batch, const AugmentConfig& cfg, Rng& rng);

}  // namespace dcaseg
