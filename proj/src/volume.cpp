#include "anomap/volume.hpp"

#include <algorithm>
#include <numeric>

#include "anomap/error.hpp"

namespace anomap {

Volume::Volume(std::string subject_id, Dims dims, int channels,
               std::array<double, 3> voxel_size_mm,
               std::vector<std::string> channel_names)
    : Volume(std::move(subject_id), dims, channels, voxel_size_mm,
             std::move(channel_names),
             std::vector<float>(static_cast<std::size_t>(std::max(channels, 0)) *
                                    dims.voxels(),
                                0.0f)) {}

Volume::Volume(std::string subject_id, Dims dims, int channels,
               std::array<double, 3> voxel_size_mm,
               std::vector<std::string> channel_names, std::vector<float> data)
    : subject_id_(std::move(subject_id)),
      dims_(dims),
      channels_(channels),
      voxel_size_(voxel_size_mm),
      channel_names_(std::move(channel_names)),
      data_(std::move(data)) {
  require(dims.depth > 0 && dims.height > 0 && dims.width > 0,
          ErrorKind::kInvalidArgument, "volume dims must be positive");
  require(channels > 0, ErrorKind::kInvalidArgument,
          "volume needs at least one channel");
  for (double s : voxel_size_) {
    require(s > 0.0, ErrorKind::kInvalidArgument,
            "voxel size components must be > 0");
  }
  require(data_.size() == static_cast<std::size_t>(channels) * dims.voxels(),
          ErrorKind::kShape,
          "volume data length " + std::to_string(data_.size()) +
              " != channels x voxels " +
              std::to_string(static_cast<std::size_t>(channels) * dims.voxels()));
  if (channel_names_.empty()) {
    for (int c = 0; c < channels; ++c) channel_names_.push_back("ch" + std::to_string(c));
  }
  require(channel_names_.size() == static_cast<std::size_t>(channels),
          ErrorKind::kInvalidArgument, "channel name count != channels");
}

std::span<float> Volume::channel(int c) {
  return std::span<float>(data_).subspan(static_cast<std::size_t>(c) * dims_.voxels(),
                                         dims_.voxels());
}

std::span<const float> Volume::channel(int c) const {
  return std::span<const float>(data_).subspan(
      static_cast<std::size_t>(c) * dims_.voxels(), dims_.voxels());
}

std::size_t BrainMask::count() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), 1));
}

Volume normalize_channels(const Volume& volume) {
  Volume out = volume;
  for (int c = 0; c < volume.channels(); ++c) {
    auto src = volume.channel(c);
    const auto [lo_it, hi_it] = std::minmax_element(src.begin(), src.end());
    const float lo = *lo_it;
    const float hi = *hi_it;
    require(hi > lo, ErrorKind::kNumeric,
            "degenerate channel " + std::to_string(c) + " (" +
                volume.channel_names()[c] + "): max == min");
    auto dst = out.channel(c);
    const double range = static_cast<double>(hi) - lo;
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src[i] == lo) {
        dst[i] = 0.0f;
      } else if (src[i] == hi) {
        dst[i] = 1.0f;
      } else {
        dst[i] = static_cast<float>((static_cast<double>(src[i]) - lo) / range);
      }
    }
  }
  return out;
}

BrainMask compute_brain_mask(const Volume& volume, float epsilon) {
  BrainMask mask(volume.dims());
  const std::size_t n = volume.dims().voxels();
  auto values = mask.values();
  for (int c = 0; c < volume.channels(); ++c) {
    auto ch = volume.channel(c);
    for (std::size_t i = 0; i < n; ++i) {
      if (ch[i] > epsilon) values[i] = 1;
    }
  }
  require(mask.count() > 0, ErrorKind::kNumeric,
          "empty brain mask for subject '" + volume.subject_id() + "'");
  return mask;
}

std::string to_string(Sex sex) { return sex == Sex::kFemale ? "F" : "M"; }

std::string to_string(Cohort cohort) {
  return cohort == Cohort::kControl ? "control" : "patient";
}

Sex parse_sex(const std::string& s) {
  if (s == "F") return Sex::kFemale;
  if (s == "M") return Sex::kMale;
  fail(ErrorKind::kFormat, "sex must be 'F' or 'M', got '" + s + "'");
}

Cohort parse_cohort(const std::string& s) {
  if (s == "control") return Cohort::kControl;
  if (s == "patient") return Cohort::kPatient;
  fail(ErrorKind::kFormat, "cohort must be 'control' or 'patient', got '" + s + "'");
}

}  // namespace anomap
