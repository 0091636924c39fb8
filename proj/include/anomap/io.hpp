#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

namespace anomap {

std::string read_text_file(const std::filesystem::path& path);
/// Creates parent directories; replaces any existing file.
void write_text_file(const std::filesystem::path& path, const std::string& text);

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace anomap
