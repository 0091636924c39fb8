#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anomap/models/autoencoder.hpp"
#include "anomap/models/siamese.hpp"
#include "anomap/volume.hpp"

namespace anomap {

enum class ModelKind { kAE, kSAE };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

/// Voxel-wise joint reconstruction error of one subject. `joint_error` is 0
/// outside `coverage`.
struct ErrorMap {
  std::string subject_id;
  Dims dims;
  std::vector<float> joint_error;
  BrainMask coverage;
  ModelKind model = ModelKind::kAE;
  std::string model_id;
};

struct AbnormalityThreshold {
  double q = 0.98;
  double value = 0.0;
  std::size_t pool_size = 0;
  std::string population_id;
  std::string model_id;
};

struct BinaryAnomalyMap {
  std::string subject_id;
  BrainMask abnormal;
  BrainMask coverage;
  double threshold = 0.0;

  const Dims& dims() const { return coverage.dims(); }
};

enum class PatchAggregate { kCenter, kOverlapMean };

std::string to_string(PatchAggregate mode);
PatchAggregate parse_patch_aggregate(const std::string& s);

struct PatchMapOptions {
  PatchAggregate mode = PatchAggregate::kCenter;
  int stride = 1;  // grid spacing of overlap-mean centres; ignored in center mode
  int patch = 15;
  int batch = 512;
};

/// sqrt(sum_c (x_c - xhat_c)^2).
float joint_error(std::span<const float> x, std::span<const float> xhat);

/// Maps a batch NCHW -> reconstruction of the same shape.
using BatchReconstructor = std::function<nn::Tensor<float>(const nn::Tensor<float>&)>;

/// Slice-wise map over the centred band of `band` axial slices.
/// Coverage is band ∩ mask.
ErrorMap error_volume_slices(const Volume& volume, const BrainMask& mask, int band,
                             const BatchReconstructor& reconstruct, int batch = 40);
ErrorMap error_volume_ae(models::AEModel<float>& model, const Volume& volume,
                         const BrainMask& mask, int band, const std::string& model_id);

/// Patch-wise map. Center mode gives every eligible centre the error of its
/// own patch at the centre pixel. Overlap-mean averages each voxel's error
/// over all patches whose centres lie on the stride grid anchored at the
/// first valid centre (y, x = half, half + stride, ...).
ErrorMap error_volume_patches(const Volume& volume, const BrainMask& mask,
                              const PatchMapOptions& options,
                              const BatchReconstructor& reconstruct);
ErrorMap error_volume_sae(models::SAEModel<float>& model, const Volume& volume,
                          const BrainMask& mask, const PatchMapOptions& options,
                          const std::string& model_id);

/// Type-7 empirical quantile: with sorted v and h = (n - 1) q,
/// v[floor h] + (h - floor h) (v[floor h + 1] - v[floor h]). q in (0, 1).
double quantile_linear(std::vector<float> values, double q);

/// Pools every covered voxel of every map and takes the q quantile.
AbnormalityThreshold abnormality_threshold(std::span<const ErrorMap> controls, double q,
                                           const std::string& population_id);

/// abnormal <=> covered and joint_error > threshold.
BinaryAnomalyMap binarize(const ErrorMap& map, double threshold);

// Storage: single-channel MVOL; uncovered voxels hold -1.
Volume error_map_to_volume(const ErrorMap& map);
ErrorMap error_map_from_volume(const Volume& volume, ModelKind model, std::string model_id);
Volume binary_map_to_volume(const BinaryAnomalyMap& map);
BinaryAnomalyMap binary_map_from_volume(const Volume& volume, double threshold);

nlohmann::json to_json(const AbnormalityThreshold& t);
AbnormalityThreshold threshold_from_json(const nlohmann::json& j);

}  // namespace anomap
