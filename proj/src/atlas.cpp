#include "anomap/atlas.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "anomap/io.hpp"
#include "anomap/mvol.hpp"
#include "anomap/phantom.hpp"

namespace anomap {

namespace fs = std::filesystem;

void LabelAtlas::validate() const {
  require(labels.size() == dims.voxels(), ErrorKind::kFormat,
          "atlas '" + id + "' has " + std::to_string(labels.size()) + " labels for " +
              std::to_string(dims.voxels()) + " voxels");
  for (const auto l : labels) {
    require(l >= 0, ErrorKind::kFormat, "atlas '" + id + "' has a negative label");
    require(l == 0 || names.count(l) != 0, ErrorKind::kFormat,
            "atlas '" + id + "' label " + std::to_string(l) + " has no name");
  }
}

std::size_t LabelAtlas::count(std::int32_t label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

LabelAtlas phantom_macro_atlas(const Dims& dims) {
  static const std::array<const char*, 8> kNames{
      "subcortical", "white_matter", "frontal",           "temporal",
      "parietal",    "occipital",    "cingulate_insular", "cerebellum"};
  LabelAtlas a;
  a.id = kMacroAtlasId;
  a.dims = dims;
  a.labels.assign(dims.voxels(), 0);
  for (int i = 0; i < 8; ++i) a.names[i + 1] = kNames[i];
  const BrainMask support = phantom_support(dims);
  const double cz = (dims.depth - 1) / 2.0;
  const double cy = (dims.height - 1) / 2.0;
  const double cx = (dims.width - 1) / 2.0;
  for (int z = 0; z < dims.depth; ++z) {
    for (int y = 0; y < dims.height; ++y) {
      for (int x = 0; x < dims.width; ++x) {
        if (!support.at(z, y, x)) continue;
        const int octant = (z > cz ? 4 : 0) | (y > cy ? 2 : 0) | (x > cx ? 1 : 0);
        a.labels[support.index(z, y, x)] = octant + 1;
      }
    }
  }
  return a;
}

LabelAtlas phantom_subcortical_atlas(const Dims& dims) {
  static const std::array<const char*, 8> kNames{"SN",       "RN",      "STN",     "GPi",
                                                 "GPe",      "thalamus", "putamen", "caudate"};
  LabelAtlas a;
  a.id = kSubcorticalAtlasId;
  a.dims = dims;
  a.labels.assign(dims.voxels(), 0);
  for (int i = 0; i < 8; ++i) a.names[i + 1] = kNames[i];
  const BrainMask support = phantom_support(dims);
  const double az = 0.44 * dims.depth, ay = 0.44 * dims.height, ax = 0.44 * dims.width;
  const double r = std::max(1.5, 0.1 * std::min({az, ay, ax}));
  const double cz = (dims.depth - 1) / 2.0;
  const double cy = (dims.height - 1) / 2.0;
  const double cx = (dims.width - 1) / 2.0;
  for (int i = 0; i < 8; ++i) {
    const double sz = cz + ((i & 4) ? 0.25 : -0.25) * az;
    const double sy = cy + ((i & 2) ? 0.25 : -0.25) * ay;
    const double sx = cx + ((i & 1) ? 0.25 : -0.25) * ax;
    for (int z = 0; z < dims.depth; ++z) {
      for (int y = 0; y < dims.height; ++y) {
        for (int x = 0; x < dims.width; ++x) {
          const double d2 = (z - sz) * (z - sz) + (y - sy) * (y - sy) + (x - sx) * (x - sx);
          if (d2 <= r * r && support.at(z, y, x)) a.labels[support.index(z, y, x)] = i + 1;
        }
      }
    }
  }
  for (int i = 1; i <= 8; ++i) {
    require(a.count(i) > 0, ErrorKind::kInvalidArgument,
            "dims too small for the phantom subcortical atlas");
  }
  return a;
}

void save_atlas(const LabelAtlas& atlas, const fs::path& dir) {
  atlas.validate();
  std::vector<float> data(atlas.labels.begin(), atlas.labels.end());
  save_mvol(Volume(atlas.id, atlas.dims, 1, {1.5, 1.5, 1.5}, {"label"}, std::move(data)),
            dir / (atlas.id + ".mvol"));
  nlohmann::json names = nlohmann::json::object();
  for (const auto& [label, name] : atlas.names) names[std::to_string(label)] = name;
  write_json_file(dir / (atlas.id + ".json"), {{"id", atlas.id}, {"names", names}});
}

LabelAtlas load_atlas(const fs::path& dir, const std::string& id) {
  const Volume v = load_mvol(dir / (id + ".mvol"));
  require(v.channels() == 1, ErrorKind::kFormat, "atlas volume '" + id + "' must have one channel");
  const nlohmann::json j = read_json_file(dir / (id + ".json"));
  LabelAtlas a;
  a.id = id;
  a.dims = v.dims();
  a.labels.reserve(v.dims().voxels());
  for (float f : v.channel(0)) {
    require(f >= 0.0f && f == std::floor(f) && f < 2147483647.0f, ErrorKind::kFormat,
            "atlas '" + id + "' holds a non-integer label");
    a.labels.push_back(static_cast<std::int32_t>(f));
  }
  try {
    for (const auto& [key, name] : j.at("names").items()) {
      a.names[std::stoi(key)] = name.get<std::string>();
    }
  } catch (const std::exception& e) {
    fail(ErrorKind::kFormat, "malformed atlas name table for '" + id + "': " + e.what());
  }
  a.validate();
  return a;
}

}  // namespace anomap
