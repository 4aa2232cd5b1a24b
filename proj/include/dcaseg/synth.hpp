#pragma once

#include <filesystem>
#include <vector>

#include "dcaseg/manifest.hpp"

namespace dcaseg {

// Appearance knobs for one synthetic domain. Mask geometry is shared across
// domains; only these image-space parameters differ. texture_duty sets the
// bright fraction of the stripe waveform; unlike color shifts, that skew
// survives the per-channel feature normalization inside the network, which
// keeps domains recognizable from pooled features.
struct DomainAppearance {
  double hue_deg = 0.0;       // rotation of RGB values around the gray axis
  double texture_freq = 4.0;  // stripe frequency, cycles per image
  double texture_duty = 0.5;  // bright fraction of the stripe waveform (0, 1)
  double noise_level = 0.02;  // stddev of additive Gaussian pixel noise
};

struct SynthSpec {
  int num_domains = 4;
  int samples_per_domain = 10;
  int image_size = 64;
  int blob_count_min = 1;
  int blob_count_max = 4;
  std::vector<DomainAppearance> appearance;  // one entry per domain

  // Evenly spread hue angles, mildly increasing texture frequency and noise.
  static SynthSpec with_defaults(int num_domains, int samples_per_domain, int image_size);

  void validate() const;
};

// Writes num_domains x samples_per_domain image/mask PNG pairs plus
// manifest.json into out_dir and returns the manifest. Pure function of
// (spec, seed): identical inputs give byte-identical files.
DatasetManifest synth_generate(const SynthSpec& spec, uint64_t seed,
                               const std::filesystem::path& out_dir);

}  // namespace dcaseg
