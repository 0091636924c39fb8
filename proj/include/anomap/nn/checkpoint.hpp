#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace anomap::nn {

// Checkpoint container:
//   bytes [0, 8)   magic "ANOM0001"
//   bytes [8, 12)  header length N, uint32 little-endian
//   then N bytes   JSON header (architecture, tensor table, training metadata)
//   then           float32 little-endian payload, tensors back to back in
//                  header-table order
inline constexpr char kCheckpointMagic[] = "ANOM0001";

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor& tensor(const std::string& name) const;
};

std::vector<char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& origin = "<memory>");
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// 16-hex-digit FNV-1a digest; used as a model id.
std::string fingerprint(const std::vector<char>& bytes);
std::string fingerprint(const std::string& text);

}  // namespace anomap::nn
