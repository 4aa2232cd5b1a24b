#include "dcaseg/folds.hpp"

#include <iostream>
#include <stdexcept>

#include "dcaseg/rng.hpp"

namespace dcaseg {

std::vector<int> FoldSplit::fold_indices(int fold) const {
  std::vector<int> out;
  for (size_t i = 0; i < fold_assignments.size(); ++i) {
    if (fold_assignments[i] == fold) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> FoldSplit::complement_indices(int fold) const {
  std::vector<int> out;
  for (size_t i = 0; i < fold_assignments.size(); ++i) {
    if (fold_assignments[i] != fold) out.push_back(static_cast<int>(i));
  }
  return out;
}

FoldSplit make_folds(const DatasetManifest& manifest, int k, uint64_t seed) {
  if (k < 2) throw std::runtime_error("make_folds requires k >= 2");
  if (manifest.samples.empty()) throw std::runtime_error("empty manifest");

  const int num_domains = manifest.num_domains();
  std::vector<std::vector<int>> by_domain(num_domains);
  for (size_t i = 0; i < manifest.samples.size(); ++i) {
    by_domain[manifest.samples[i].domain_id].push_back(static_cast<int>(i));
  }

  Rng root(seed);
  FoldSplit split;
  split.k = k;
  split.fold_assignments.assign(manifest.samples.size(), -1);

  // Shuffle inside each domain, then deal round-robin with a fold cursor
  // carried across domains so global fold sizes stay balanced too.
  int cursor = 0;
  for (int d = 0; d < num_domains; ++d) {
    std::vector<int>& idx = by_domain[d];
    if (static_cast<int>(idx.size()) < k) {
      std::cerr << "warning: domain " << manifest.domain_names[d] << " has "
                << idx.size() << " samples (< k=" << k
                << "); stratification is best-effort\n";
    }
    Rng rng = root.fork(0xF01Dull << 32 | static_cast<uint64_t>(d));
    for (size_t i = idx.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(idx[i - 1], idx[j]);
    }
    for (int sample : idx) {
      split.fold_assignments[sample] = cursor;
      cursor = (cursor + 1) % k;
    }
  }
  return split;
}

}  // namespace dcaseg
