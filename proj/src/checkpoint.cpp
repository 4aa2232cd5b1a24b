#include "dcaseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dcaseg {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'D', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
void write_u64(std::ostream& out, uint64_t v) {
  write_u32(out, static_cast<uint32_t>(v));
  write_u32(out, static_cast<uint32_t>(v >> 32));
}
uint64_t read_u64(std::istream& in) {
  uint64_t lo = read_u32(in);
  uint64_t hi = read_u32(in);
  return lo | (hi << 32);
}
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PlanConfig& plan,
                     const ParamSet<float>& params) {
  json header;
  header["plan"] = json::parse(plan.to_json());
  header["tensors"] = json::array();
  uint64_t offset = 0;
  for (const auto& p : params) {
    json t;
    t["name"] = p.name;
    t["shape"] = p.shape;
    t["offset"] = offset;
    t["count"] = p.value->size();
    header["tensors"].push_back(t);
    offset += p.value->size();
  }
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out.write(kMagic, 8);
  write_u32(out, kVersion);
  write_u64(out, header_text.size());
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& p : params) {
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(p.value->data()),
              static_cast<std::streamsize>(p.value->size() * 4));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing file: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  uint32_t version = read_u32(in);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  uint64_t header_len = read_u64(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path.string());

  json header = json::parse(header_text);
  Checkpoint ckpt;
  ckpt.plan = PlanConfig::from_json(header.at("plan").dump());
  for (const json& t : header.at("tensors")) {
    std::string name = t.at("name").get<std::string>();
    std::vector<int> shape = t.at("shape").get<std::vector<int>>();
    size_t count = t.at("count").get<size_t>();
    std::vector<float> data(count);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * 4));
    if (!in) throw std::runtime_error("truncated checkpoint payload: " + path.string());
    ckpt.order.push_back(name);
    ckpt.tensors.emplace(std::move(name), std::make_pair(std::move(shape), std::move(data)));
  }
  return ckpt;
}

void load_into(const Checkpoint& ckpt, ParamSet<float>& params) {
  for (auto& p : params) {
    auto it = ckpt.tensors.find(p.name);
    if (it == ckpt.tensors.end())
      throw std::runtime_error("checkpoint missing tensor: " + p.name);
    if (it->second.first != p.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + p.name);
    if (it->second.second.size() != p.value->size())
      throw std::runtime_error("checkpoint size mismatch for " + p.name);
    *p.value = it->second.second;
  }
}

}  // namespace dcaseg
