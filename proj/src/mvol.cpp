#include "anomap/mvol.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "anomap/error.hpp"

namespace anomap {

using nlohmann::json;

void append_u32_le(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t read_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

void append_f32_le(std::vector<char>& out, std::span<const float> values) {
  const std::size_t offset = out.size();
  out.resize(offset + values.size() * 4);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data() + offset, values.data(), values.size() * 4);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(values[i]);
      for (int b = 0; b < 4; ++b) {
        out[offset + 4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
      }
    }
  }
}

void read_f32_le(const char* p, std::span<float> out) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data(), p, out.size() * 4);
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = std::bit_cast<float>(read_u32_le(p + 4 * i));
    }
  }
}

std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open '" + path.string() + "' for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  require(!in.bad(), ErrorKind::kIo, "read failure on '" + path.string() + "'");
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::kIo, "write failure on '" + path.string() + "'");
}

std::vector<char> encode_mvol(const Volume& volume) {
  const Dims& d = volume.dims();
  json header = {
      {"subject_id", volume.subject_id()},
      {"dims", {d.depth, d.height, d.width}},
      {"channels", volume.channels()},
      {"voxel_size", {volume.voxel_size_mm()[0], volume.voxel_size_mm()[1],
                      volume.voxel_size_mm()[2]}},
      {"channel_names", volume.channel_names()},
      {"dtype", "float32_le"},
  };
  const std::string text = header.dump();
  std::vector<char> out;
  out.reserve(kMvolPrefixBytes + text.size() + volume.data().size() * 4);
  out.insert(out.end(), kMvolMagic, kMvolMagic + 8);
  append_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  append_f32_le(out, volume.data());
  return out;
}

namespace {

template <typename T>
T header_field(const json& header, const char* name, const std::string& origin) {
  if (!header.contains(name)) {
    fail(ErrorKind::kFormat, origin + ": MVOL header missing field '" + name + "'");
  }
  try {
    return header.at(name).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat,
         origin + ": MVOL header field '" + name + "' has wrong type: " + e.what());
  }
}

}  // namespace

Volume decode_mvol(const std::vector<char>& bytes, const std::string& origin) {
  require(bytes.size() >= kMvolPrefixBytes, ErrorKind::kFormat,
          origin + ": truncated at offset " + std::to_string(bytes.size()) +
              " (need 12-byte prefix)");
  require(std::memcmp(bytes.data(), kMvolMagic, 8) == 0, ErrorKind::kFormat,
          origin + ": bad magic at offset 0 (expected MVOL0001)");
  const std::uint32_t header_len = read_u32_le(bytes.data() + 8);
  require(bytes.size() >= kMvolPrefixBytes + header_len, ErrorKind::kFormat,
          origin + ": header length " + std::to_string(header_len) +
              " at offset 8 runs past end of file (" + std::to_string(bytes.size()) +
              " bytes)");
  json header;
  try {
    header = json::parse(bytes.begin() + kMvolPrefixBytes,
                         bytes.begin() + kMvolPrefixBytes + header_len);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kFormat, origin + ": malformed JSON header at offset " +
                                 std::to_string(kMvolPrefixBytes + e.byte) + ": " +
                                 e.what());
  }
  require(header.is_object(), ErrorKind::kFormat,
          origin + ": MVOL header at offset 12 is not a JSON object");

  const auto dims = header_field<std::vector<int>>(header, "dims", origin);
  require(dims.size() == 3, ErrorKind::kFormat,
          origin + ": MVOL header field 'dims' must have 3 entries");
  const int channels = header_field<int>(header, "channels", origin);
  const auto voxel = header_field<std::vector<double>>(header, "voxel_size", origin);
  require(voxel.size() == 3, ErrorKind::kFormat,
          origin + ": MVOL header field 'voxel_size' must have 3 entries");
  const auto subject = header_field<std::string>(header, "subject_id", origin);
  std::vector<std::string> names;
  if (header.contains("channel_names")) {
    names = header_field<std::vector<std::string>>(header, "channel_names", origin);
  }
  if (header.contains("dtype")) {
    require(header_field<std::string>(header, "dtype", origin) == "float32_le",
            ErrorKind::kFormat, origin + ": MVOL header field 'dtype' must be float32_le");
  }
  for (int v : dims) {
    require(v > 0, ErrorKind::kFormat, origin + ": MVOL header field 'dims' must be positive");
  }
  require(channels > 0, ErrorKind::kFormat,
          origin + ": MVOL header field 'channels' must be positive");

  const Dims d{dims[0], dims[1], dims[2]};
  const std::size_t count = static_cast<std::size_t>(channels) * d.voxels();
  const std::size_t payload_offset = kMvolPrefixBytes + header_len;
  const std::size_t payload_bytes = bytes.size() - payload_offset;
  require(payload_bytes == count * 4, ErrorKind::kFormat,
          origin + ": payload length mismatch at offset " +
              std::to_string(payload_offset) + ": header declares " +
              std::to_string(count * 4) + " bytes, file holds " +
              std::to_string(payload_bytes));
  std::vector<float> data(count);
  read_f32_le(bytes.data() + payload_offset, data);
  try {
    return Volume(subject, d, channels, {voxel[0], voxel[1], voxel[2]}, std::move(names),
                  std::move(data));
  } catch (const Error& e) {
    fail(ErrorKind::kFormat, origin + ": " + e.what());
  }
}

void save_mvol(const Volume& volume, const std::filesystem::path& path) {
  write_file_bytes(path, encode_mvol(volume));
}

Volume load_mvol(const std::filesystem::path& path) {
  return decode_mvol(read_file_bytes(path), path.string());
}

}  // namespace anomap
