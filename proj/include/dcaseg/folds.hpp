#pragma once

#include <cstdint>
#include <vector>

#include "dcaseg/manifest.hpp"

namespace dcaseg {

// Stratified-by-domain partition of a manifest into k folds.
struct FoldSplit {
  int k = 0;
  std::vector<int> fold_assignments;  // per-sample fold index in [0, k)

  std::vector<int> fold_indices(int fold) const;      // samples in the fold
  std::vector<int> complement_indices(int fold) const;  // samples outside it
};

// Deterministic given (manifest, k, seed). Throws for k < 2. Domains with
// fewer than k samples are handled best-effort (some folds receive none)
// with a warning on stderr.
FoldSplit make_folds(const DatasetManifest& manifest, int k, uint64_t seed);

}  // namespace dcaseg
