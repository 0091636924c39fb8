#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "anomap/volume.hpp"

namespace anomap {

/// One axial slice, pixels laid out [channel][y][x].
struct SliceSample {
  std::string subject_id;
  int slice_index = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;
};

/// In-plane square patch centred on `center`, pixels [channel][y][x].
struct PatchSample {
  std::string subject_id;
  Voxel center;
  int channels = 0;
  int size = 0;
  std::vector<float> pixels;
};

/// Two subjects at the same location.
struct PatchPair {
  PatchSample left;
  PatchSample right;
};

struct BalanceConstraints {
  double max_age_gap = 2.0;       // years, |mean_age(train) - mean_age(test)|
  double min_female_fraction = 0.30;
  double max_female_fraction = 0.50;
  int max_attempts = 10000;
};

struct SplitPlan {
  int sample_index = 0;  // 1-based
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  double train_mean_age = 0.0;
  double test_mean_age = 0.0;
  double train_female_fraction = 0.0;
  double test_female_fraction = 0.0;
  int attempts = 0;
};

/// First slice and count of the centred axial band: [first, first + count).
std::pair<int, int> slice_band(int depth, int count);

std::vector<SliceSample> extract_axial_slices(const Volume& volume, int count = 40);
SliceSample axial_slice(const Volume& volume, int z);

/// Centres whose full in-plane patch lies inside the volume and the mask
/// (the mask eroded by the half-width in y and x only), in z, y, x order.
std::vector<Voxel> eligible_patch_centers(const BrainMask& mask, int patch = 15);

PatchSample extract_patch(const Volume& volume, const Voxel& center, int patch = 15);

/// Uniform draw of `count` eligible centres: without replacement when enough
/// centres exist, with replacement otherwise.
std::vector<PatchSample> extract_patches(const Volume& volume, const BrainMask& mask, int count,
                                         int patch, std::uint64_t seed);

/// Pairs every sampled patch of subject A with the patch at the same centre
/// of a uniformly drawn different subject B. `volumes[i]` belongs to
/// `patches_by_subject[i]`.
std::vector<PatchPair> build_similar_pairs(
    std::span<const std::vector<PatchSample>> patches_by_subject,
    std::span<const Volume* const> volumes, std::uint64_t seed);

/// Balanced random partitions of the control pool by rejection sampling.
/// Each plan draws from its own stream, so plan k does not depend on n_samples.
/// If the pool's own female fraction lies outside the window, the window is
/// widened to include it (no split can be more balanced than its pool).
std::vector<SplitPlan> bootstrap_split(const std::vector<SubjectMeta>& controls, int n_samples,
                                       int n_train, int n_test, std::uint64_t seed,
                                       const BalanceConstraints& balance = {});

}  // namespace anomap
