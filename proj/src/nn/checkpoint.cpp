#include "anomap/nn/checkpoint.hpp"

#include <cstring>

#include "anomap/error.hpp"
#include "anomap/mvol.hpp"

namespace anomap::nn {

using nlohmann::json;

const NamedTensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  fail(ErrorKind::kFormat, "checkpoint has no tensor '" + name + "'");
}

std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
  json header = ckpt.header;
  json table = json::array();
  std::size_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    std::size_t count = 1;
    for (int d : t.shape) count *= static_cast<std::size_t>(d);
    require(count == t.values.size(), ErrorKind::kShape,
            "checkpoint tensor '" + t.name + "' shape does not match its values");
    table.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", count}});
    offset += count;
  }
  header["format"] = "ANOM0001";
  header["tensors"] = table;
  const std::string text = header.dump();
  std::vector<char> out(kCheckpointMagic, kCheckpointMagic + 8);
  append_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : ckpt.tensors) append_f32_le(out, t.values);
  return out;
}

Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& origin) {
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), kCheckpointMagic, 8) == 0,
          ErrorKind::kFormat, origin + ": not an ANOM0001 checkpoint (bad magic at offset 0)");
  const std::uint32_t len = read_u32_le(bytes.data() + 8);
  require(bytes.size() >= 12 + static_cast<std::size_t>(len), ErrorKind::kFormat,
          origin + ": header length at offset 8 runs past end of file");
  Checkpoint ckpt;
  try {
    ckpt.header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kFormat, origin + ": malformed checkpoint header at offset " +
                                 std::to_string(12 + e.byte) + ": " + e.what());
  }
  require(ckpt.header.contains("tensors") && ckpt.header["tensors"].is_array(),
          ErrorKind::kFormat, origin + ": checkpoint header missing field 'tensors'");
  const std::size_t payload = 12 + len;
  std::size_t total = 0;
  for (const auto& entry : ckpt.header["tensors"]) {
    NamedTensor t;
    try {
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<std::vector<int>>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      require(payload + (offset + count) * 4 <= bytes.size(), ErrorKind::kFormat,
              origin + ": tensor '" + t.name + "' at payload offset " +
                  std::to_string(payload + offset * 4) + " runs past end of file");
      t.values.resize(count);
      read_f32_le(bytes.data() + payload + offset * 4, t.values);
      total += count;
    } catch (const json::exception& e) {
      fail(ErrorKind::kFormat, origin + ": bad tensor table entry: " + e.what());
    }
    ckpt.tensors.push_back(std::move(t));
  }
  require(payload + total * 4 == bytes.size(), ErrorKind::kFormat,
          origin + ": payload length mismatch (expected " + std::to_string(total * 4) +
              " bytes after offset " + std::to_string(payload) + ")");
  ckpt.header.erase("tensors");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path), path.string());
}

namespace {
std::string fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}
}  // namespace

std::string fingerprint(const std::vector<char>& bytes) { return fnv1a(bytes.data(), bytes.size()); }
std::string fingerprint(const std::string& text) { return fnv1a(text.data(), text.size()); }

}  // namespace anomap::nn
