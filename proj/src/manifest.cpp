#include "dcaseg/manifest.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "dcaseg/png_io.hpp"
#include "json.hpp"

namespace dcaseg {

using nlohmann::json;

std::vector<int> DatasetManifest::domain_counts() const {
  std::vector<int> counts(domain_names.size(), 0);
  for (const Sample& s : samples) counts.at(s.domain_id)++;
  return counts;
}

DatasetManifest load_manifest(const std::filesystem::path& path,
                              bool validate_files, bool require_balanced) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest parse error in " + path.string() + ": " + e.what());
  }

  DatasetManifest m;
  if (!doc.contains("domains") || !doc["domains"].is_array() || doc["domains"].empty()) {
    throw std::runtime_error("manifest must list at least one domain");
  }
  m.domain_names = doc["domains"].get<std::vector<std::string>>();
  m.seed = doc.value("seed", 0ull);

  const std::filesystem::path base = path.parent_path();
  for (const json& js : doc.at("samples")) {
    Sample s;
    std::filesystem::path img = js.at("image").get<std::string>();
    std::filesystem::path msk = js.at("mask").get<std::string>();
    s.image_path = img.is_absolute() ? img : base / img;
    s.mask_path = msk.is_absolute() ? msk : base / msk;
    s.domain_id = js.at("domain").get<int>();
    if (s.domain_id < 0 || s.domain_id >= m.num_domains()) {
      throw std::runtime_error("domain_id out of range [0, " +
                               std::to_string(m.num_domains()) + "): " +
                               std::to_string(s.domain_id));
    }
    m.samples.push_back(std::move(s));
  }

  if (validate_files) {
    for (const Sample& s : m.samples) {
      if (!std::filesystem::exists(s.image_path))
        throw std::runtime_error("missing file: " + s.image_path.string());
      if (!std::filesystem::exists(s.mask_path))
        throw std::runtime_error("missing file: " + s.mask_path.string());
      auto [ih, iw] = read_png_size(s.image_path);
      Mask mask = read_mask_png(s.mask_path);
      if (ih != mask.h || iw != mask.w) {
        throw std::runtime_error("mask/image shape mismatch: " + s.image_path.string());
      }
      for (uint8_t v : mask.data) {
        if (v > 1) {
          throw std::runtime_error("non-binary mask value " + std::to_string(int(v)) +
                                   " in " + s.mask_path.string());
        }
      }
    }
  }

  if (require_balanced) {
    std::vector<int> counts = m.domain_counts();
    for (int c : counts) {
      if (c != counts[0]) throw std::runtime_error("manifest is not domain-balanced");
    }
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  const std::filesystem::path base = path.parent_path();
  json doc;
  doc["domains"] = manifest.domain_names;
  doc["seed"] = manifest.seed;
  doc["samples"] = json::array();
  for (const Sample& s : manifest.samples) {
    json js;
    std::error_code ec;
    std::filesystem::path rel_img = std::filesystem::relative(s.image_path, base, ec);
    js["image"] = (ec || rel_img.empty()) ? s.image_path.string() : rel_img.string();
    std::filesystem::path rel_msk = std::filesystem::relative(s.mask_path, base, ec);
    js["mask"] = (ec || rel_msk.empty()) ? s.mask_path.string() : rel_msk.string();
    js["domain"] = s.domain_id;
    doc["samples"].push_back(js);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
  out << doc.dump(2) << "\n";
}

DatasetManifest subset(const DatasetManifest& manifest, const std::vector<int>& indices) {
  DatasetManifest out;
  out.domain_names = manifest.domain_names;
  out.seed = manifest.seed;
  for (int i : indices) out.samples.push_back(manifest.samples.at(i));
  return out;
}

DatasetManifest filter_domains(const DatasetManifest& manifest,
                               const std::vector<int>& domains, bool remap) {
  DatasetManifest out;
  out.seed = manifest.seed;
  std::vector<int> new_id(manifest.num_domains(), -1);
  if (remap) {
    for (size_t i = 0; i < domains.size(); ++i) {
      out.domain_names.push_back(manifest.domain_names.at(domains[i]));
      new_id.at(domains[i]) = static_cast<int>(i);
    }
  } else {
    out.domain_names = manifest.domain_names;
    for (int d : domains) new_id.at(d) = d;
  }
  for (const Sample& s : manifest.samples) {
    if (new_id[s.domain_id] >= 0) {
      Sample t = s;
      t.domain_id = new_id[s.domain_id];
      out.samples.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace dcaseg
