#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "anomap/volume.hpp"

namespace anomap {

// MVOL container layout:
//   bytes [0, 8)    magic "MVOL0001"
//   bytes [8, 12)   header length N, uint32 little-endian
//   bytes [12, 12+N) UTF-8 JSON header
//   then            float32 little-endian payload, channel-major, z, y, x
inline constexpr char kMvolMagic[] = "MVOL0001";
inline constexpr std::size_t kMvolPrefixBytes = 12;

std::vector<char> encode_mvol(const Volume& volume);
Volume decode_mvol(const std::vector<char>& bytes, const std::string& origin = "<memory>");

void save_mvol(const Volume& volume, const std::filesystem::path& path);
Volume load_mvol(const std::filesystem::path& path);

// Shared helpers for the little-endian float payloads used by MVOL and the
// checkpoint container.
void append_u32_le(std::vector<char>& out, std::uint32_t v);
std::uint32_t read_u32_le(const char* p);
void append_f32_le(std::vector<char>& out, std::span<const float> values);
void read_f32_le(const char* p, std::span<float> out);

std::vector<char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes);

}  // namespace anomap
