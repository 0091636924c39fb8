#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "anomap/volume.hpp"

namespace anomap {

/// Integer label per voxel, 0 = background, with a name for every label.
struct LabelAtlas {
  std::string id;
  Dims dims;
  std::vector<std::int32_t> labels;
  std::map<std::int32_t, std::string> names;

  std::int32_t at(int z, int y, int x) const {
    return labels[(static_cast<std::size_t>(z) * dims.height + y) * dims.width + x];
  }
  /// Throws kFormat if a nonzero label has no name or the size is off.
  void validate() const;
  std::size_t count(std::int32_t label) const;
};

inline constexpr const char* kMacroAtlasId = "macro";
inline constexpr const char* kSubcorticalAtlasId = "subcortical";

/// Eight macro-regions partitioning the phantom brain support into octants
/// around its centre.
LabelAtlas phantom_macro_atlas(const Dims& dims);

/// Eight small disjoint spheres around the phantom centre standing in for
/// the subcortical nuclei.
LabelAtlas phantom_subcortical_atlas(const Dims& dims);

// On disk an atlas is <dir>/<id>.mvol (one channel of integer-valued labels)
// plus <dir>/<id>.json holding {"id", "names": {"<label>": "<name>"}}.
void save_atlas(const LabelAtlas& atlas, const std::filesystem::path& dir);
LabelAtlas load_atlas(const std::filesystem::path& dir, const std::string& id);

}  // namespace anomap
