#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dcaseg {

struct Sample {
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
  int domain_id = 0;
};

// Single source of truth for dataset contents and split derivation.
struct DatasetManifest {
  std::vector<Sample> samples;
  std::vector<std::string> domain_names;
  uint64_t seed = 0;

  int num_domains() const { return static_cast<int>(domain_names.size()); }
  std::vector<int> domain_counts() const;
};

// Loads and validates a manifest JSON document. Paths in the document are
// resolved relative to the manifest's directory. With validate_files set,
// every referenced image/mask is decoded and checked (shape match, labels
// in {0,1}). require_balanced additionally enforces equal per-domain counts.
DatasetManifest load_manifest(const std::filesystem::path& path,
                              bool validate_files = true,
                              bool require_balanced = false);

// Writes the manifest JSON; sample paths are stored relative to the
// manifest directory when possible.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Manifest restricted to samples whose index passes the predicate filter.
DatasetManifest subset(const DatasetManifest& manifest, const std::vector<int>& indices);

// Samples belonging to the given domains, with domain ids remapped to
// 0..n-1 in the order given when remap is set.
DatasetManifest filter_domains(const DatasetManifest& manifest,
                               const std::vector<int>& domains, bool remap = false);

}  // namespace dcaseg
