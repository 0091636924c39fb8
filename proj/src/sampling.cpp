#include "anomap/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "anomap/error.hpp"
#include "anomap/rng.hpp"

namespace anomap {

std::pair<int, int> slice_band(int depth, int count) {
  require(count > 0, ErrorKind::kInvalidArgument, "slice count must be > 0");
  require(count <= depth, ErrorKind::kInvalidArgument,
          "slice count " + std::to_string(count) + " exceeds depth " + std::to_string(depth));
  return {(depth - count) / 2, count};
}

SliceSample axial_slice(const Volume& volume, int z) {
  const Dims& d = volume.dims();
  require(z >= 0 && z < d.depth, ErrorKind::kInvalidArgument, "slice index out of range");
  SliceSample s;
  s.subject_id = volume.subject_id();
  s.slice_index = z;
  s.channels = volume.channels();
  s.height = d.height;
  s.width = d.width;
  s.pixels.reserve(static_cast<std::size_t>(s.channels) * d.height * d.width);
  for (int c = 0; c < s.channels; ++c) {
    const float* src = &volume.data()[volume.index(c, z, 0, 0)];
    s.pixels.insert(s.pixels.end(), src, src + static_cast<std::size_t>(d.height) * d.width);
  }
  return s;
}

std::vector<SliceSample> extract_axial_slices(const Volume& volume, int count) {
  const auto [first, n] = slice_band(volume.dims().depth, count);
  std::vector<SliceSample> out;
  out.reserve(n);
  for (int z = first; z < first + n; ++z) out.push_back(axial_slice(volume, z));
  return out;
}

std::vector<Voxel> eligible_patch_centers(const BrainMask& mask, int patch) {
  require(patch > 0 && patch % 2 == 1, ErrorKind::kInvalidArgument, "patch size must be odd");
  const Dims& d = mask.dims();
  const int half = patch / 2;
  std::vector<Voxel> out;
  // Separable square erosion per slice: rows first, then columns.
  std::vector<std::uint8_t> rows(static_cast<std::size_t>(d.height) * d.width);
  for (int z = 0; z < d.depth; ++z) {
    for (int y = 0; y < d.height; ++y) {
      int run = 0;  // consecutive true voxels ending at x
      std::vector<int> runs(d.width);
      for (int x = 0; x < d.width; ++x) {
        run = mask.at(z, y, x) ? run + 1 : 0;
        runs[x] = run;
      }
      for (int x = 0; x < d.width; ++x) {
        const int right = x + half;
        rows[static_cast<std::size_t>(y) * d.width + x] =
            (x - half >= 0 && right < d.width && runs[right] >= patch) ? 1 : 0;
      }
    }
    for (int x = 0; x < d.width; ++x) {
      int run = 0;
      std::vector<int> runs(d.height);
      for (int y = 0; y < d.height; ++y) {
        run = rows[static_cast<std::size_t>(y) * d.width + x] ? run + 1 : 0;
        runs[y] = run;
      }
      for (int y = half; y + half < d.height; ++y) {
        if (runs[y + half] >= patch) out.push_back({z, y, x});
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

PatchSample extract_patch(const Volume& volume, const Voxel& center, int patch) {
  const int half = patch / 2;
  require(volume.contains(center.z, center.y - half, center.x - half) &&
              volume.contains(center.z, center.y + half, center.x + half),
          ErrorKind::kInvalidArgument,
          "patch at (" + std::to_string(center.z) + "," + std::to_string(center.y) + "," +
              std::to_string(center.x) + ") leaves the volume");
  PatchSample p;
  p.subject_id = volume.subject_id();
  p.center = center;
  p.channels = volume.channels();
  p.size = patch;
  p.pixels.reserve(static_cast<std::size_t>(p.channels) * patch * patch);
  for (int c = 0; c < p.channels; ++c) {
    for (int y = center.y - half; y <= center.y + half; ++y) {
      const float* row = &volume.data()[volume.index(c, center.z, y, center.x - half)];
      p.pixels.insert(p.pixels.end(), row, row + patch);
    }
  }
  return p;
}

std::vector<PatchSample> extract_patches(const Volume& volume, const BrainMask& mask, int count,
                                         int patch, std::uint64_t seed) {
  require(mask.dims() == volume.dims(), ErrorKind::kShape, "mask dims differ from volume dims");
  require(count >= 0, ErrorKind::kInvalidArgument, "patch count must be >= 0");
  std::vector<Voxel> eligible = eligible_patch_centers(mask, patch);
  require(!eligible.empty(), ErrorKind::kInvalidArgument,
          "no eligible patch centre for subject '" + volume.subject_id() + "'");
  Rng rng(seed);
  std::vector<Voxel> chosen;
  chosen.reserve(count);
  if (static_cast<std::size_t>(count) <= eligible.size()) {
    // Partial Fisher-Yates.
    for (int i = 0; i < count; ++i) {
      const auto j = i + rng.index(eligible.size() - i);
      std::swap(eligible[i], eligible[j]);
      chosen.push_back(eligible[i]);
    }
  } else {
    for (int i = 0; i < count; ++i) chosen.push_back(eligible[rng.index(eligible.size())]);
  }
  std::vector<PatchSample> out;
  out.reserve(count);
  for (const Voxel& v : chosen) out.push_back(extract_patch(volume, v, patch));
  return out;
}

std::vector<PatchPair> build_similar_pairs(
    std::span<const std::vector<PatchSample>> patches_by_subject,
    std::span<const Volume* const> volumes, std::uint64_t seed) {
  const std::size_t n = patches_by_subject.size();
  require(n >= 2, ErrorKind::kInvalidArgument, "similar pairs need at least two subjects");
  require(volumes.size() == n, ErrorKind::kInvalidArgument,
          "one volume per patch list is required");
  Rng rng(seed);
  std::vector<PatchPair> pairs;
  for (std::size_t a = 0; a < n; ++a) {
    for (const PatchSample& left : patches_by_subject[a]) {
      std::size_t b = rng.index(n - 1);
      if (b >= a) ++b;
      pairs.push_back({left, extract_patch(*volumes[b], left.center, left.size)});
    }
  }
  return pairs;
}

std::vector<SplitPlan> bootstrap_split(const std::vector<SubjectMeta>& controls, int n_samples,
                                       int n_train, int n_test, std::uint64_t seed,
                                       const BalanceConstraints& balance) {
  require(n_samples > 0 && n_train > 0 && n_test > 0, ErrorKind::kInvalidArgument,
          "split sizes must be positive");
  require(controls.size() == static_cast<std::size_t>(n_train + n_test),
          ErrorKind::kInvalidArgument,
          "control pool holds " + std::to_string(controls.size()) + " subjects, expected " +
              std::to_string(n_train + n_test));
  const auto female = [](const SubjectMeta& m) { return m.sex == Sex::kFemale ? 1.0 : 0.0; };
  double pool_female = 0.0;
  for (const auto& m : controls) pool_female += female(m);
  pool_female /= static_cast<double>(controls.size());
  const double lo = std::min(balance.min_female_fraction, pool_female);
  const double hi = std::max(balance.max_female_fraction, pool_female);

  std::vector<SplitPlan> plans;
  for (int s = 1; s <= n_samples; ++s) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
    std::vector<std::size_t> order(controls.size());
    bool accepted = false;
    for (int attempt = 1; attempt <= balance.max_attempts && !accepted; ++attempt) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(order.begin(), order.end());
      double age_train = 0.0, age_test = 0.0, f_train = 0.0, f_test = 0.0;
      for (int i = 0; i < n_train; ++i) {
        age_train += controls[order[i]].age;
        f_train += female(controls[order[i]]);
      }
      for (int i = n_train; i < n_train + n_test; ++i) {
        age_test += controls[order[i]].age;
        f_test += female(controls[order[i]]);
      }
      age_train /= n_train;
      age_test /= n_test;
      f_train /= n_train;
      f_test /= n_test;
      constexpr double kSlack = 1e-12;
      if (std::abs(age_train - age_test) > balance.max_age_gap + kSlack) continue;
      if (f_train < lo - kSlack || f_train > hi + kSlack) continue;
      if (f_test < lo - kSlack || f_test > hi + kSlack) continue;
      SplitPlan plan;
      plan.sample_index = s;
      for (int i = 0; i < n_train; ++i) plan.train_ids.push_back(controls[order[i]].subject_id);
      for (int i = n_train; i < n_train + n_test; ++i) {
        plan.test_ids.push_back(controls[order[i]].subject_id);
      }
      plan.train_mean_age = age_train;
      plan.test_mean_age = age_test;
      plan.train_female_fraction = f_train;
      plan.test_female_fraction = f_test;
      plan.attempts = attempt;
      plans.push_back(std::move(plan));
      accepted = true;
    }
    require(accepted, ErrorKind::kInvalidArgument,
            "split " + std::to_string(s) + ": balance constraints unattainable within " +
                std::to_string(balance.max_attempts) + " attempts");
  }
  return plans;
}

}  // namespace anomap
