#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "anomap/error.hpp"

namespace anomap {

/// Voxel extents, ordered (depth, height, width) = (z, y, x).
struct Dims {
  int depth = 0;
  int height = 0;
  int width = 0;

  std::size_t voxels() const {
    return static_cast<std::size_t>(depth) * height * width;
  }
  bool operator==(const Dims&) const = default;
};

struct Voxel {
  int z = 0;
  int y = 0;
  int x = 0;
  bool operator==(const Voxel&) const = default;
  auto operator<=>(const Voxel&) const = default;
};

/// Multi-channel scalar field stored channel-major, then z, y, x.
class Volume {
 public:
  Volume() = default;
  Volume(std::string subject_id, Dims dims, int channels,
         std::array<double, 3> voxel_size_mm = {1.5, 1.5, 1.5},
         std::vector<std::string> channel_names = {});
  Volume(std::string subject_id, Dims dims, int channels,
         std::array<double, 3> voxel_size_mm,
         std::vector<std::string> channel_names, std::vector<float> data);

  const std::string& subject_id() const { return subject_id_; }
  void set_subject_id(std::string id) { subject_id_ = std::move(id); }
  const Dims& dims() const { return dims_; }
  int channels() const { return channels_; }
  const std::array<double, 3>& voxel_size_mm() const { return voxel_size_; }
  const std::vector<std::string>& channel_names() const { return channel_names_; }

  std::size_t index(int c, int z, int y, int x) const {
    return ((static_cast<std::size_t>(c) * dims_.depth + z) * dims_.height + y) *
               dims_.width +
           x;
  }
  float& at(int c, int z, int y, int x) { return data_[index(c, z, y, x)]; }
  float at(int c, int z, int y, int x) const { return data_[index(c, z, y, x)]; }

  bool contains(int z, int y, int x) const {
    return z >= 0 && y >= 0 && x >= 0 && z < dims_.depth && y < dims_.height &&
           x < dims_.width;
  }

  std::span<float> channel(int c);
  std::span<const float> channel(int c) const;
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

 private:
  std::string subject_id_;
  Dims dims_{};
  int channels_ = 0;
  std::array<double, 3> voxel_size_{1.5, 1.5, 1.5};
  std::vector<std::string> channel_names_;
  std::vector<float> data_;
};

enum class Sex { kFemale, kMale };
enum class Cohort { kControl, kPatient };

struct SubjectMeta {
  std::string subject_id;
  double age = 0.0;
  Sex sex = Sex::kFemale;
  Cohort cohort = Cohort::kControl;
};

/// Boolean field over (z, y, x); stored as bytes so spans are addressable.
class BrainMask {
 public:
  BrainMask() = default;
  explicit BrainMask(Dims dims) : dims_(dims), mask_(dims.voxels(), 0) {}

  const Dims& dims() const { return dims_; }
  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * dims_.height + y) * dims_.width + x;
  }
  bool at(int z, int y, int x) const { return mask_[index(z, y, x)] != 0; }
  void set(int z, int y, int x, bool v) { mask_[index(z, y, x)] = v ? 1 : 0; }
  std::span<const std::uint8_t> values() const { return mask_; }
  std::span<std::uint8_t> values() { return mask_; }
  std::size_t count() const;

 private:
  Dims dims_{};
  std::vector<std::uint8_t> mask_;
};

/// Ground truth recorded by the phantom generator.
struct PhantomTruth {
  std::string subject_id;
  BrainMask anomaly_mask;
  std::vector<double> anomaly_magnitude;  // one per lesion, pre-clip
  std::vector<Voxel> lesion_centers;
  std::size_t brain_support = 0;  // voxel count of the generator's brain region
};

/// Per-channel min-max rescale onto [0, 1]. Throws on a constant channel.
Volume normalize_channels(const Volume& volume);

/// True where any channel exceeds `epsilon`. Throws when nothing qualifies.
BrainMask compute_brain_mask(const Volume& volume, float epsilon = 0.0f);

std::string to_string(Sex sex);
std::string to_string(Cohort cohort);
Sex parse_sex(const std::string& s);
Cohort parse_cohort(const std::string& s);

}  // namespace anomap
