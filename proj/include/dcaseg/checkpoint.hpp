#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dcaseg/layers.hpp"
#include "dcaseg/plan.hpp"

namespace dcaseg {

// Binary checkpoint container: magic + version, a JSON header describing
// the plan and the tensor table, then raw little-endian float32 payload.
// Round-trips are bit-stable.
struct Checkpoint {
  PlanConfig plan;
  std::vector<std::string> order;  // tensor names in file order
  std::map<std::string, std::pair<std::vector<int>, std::vector<float>>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const PlanConfig& plan,
                     const ParamSet<float>& params);

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint tensors into the param set; throws if a name is missing
// or a shape disagrees.
void load_into(const Checkpoint& ckpt, ParamSet<float>& params);

}  // namespace dcaseg
