#include <doctest.h>

#include <cmath>
#include <set>

#include "anomap/phantom.hpp"
#include "anomap/rng.hpp"
#include "anomap/sampling.hpp"

using namespace anomap;

namespace {

Volume ramp(Dims d, const std::string& id, float offset = 0.0f) {
  Volume v(id, d, 2);
  for (int c = 0; c < 2; ++c) {
    for (int z = 0; z < d.depth; ++z) {
      for (int y = 0; y < d.height; ++y) {
        for (int x = 0; x < d.width; ++x) {
          v.at(c, z, y, x) = offset + 0.001f * (c * 7 + z * 3 + y * 2 + x);
        }
      }
    }
  }
  return v;
}

BrainMask full_mask(Dims d) {
  BrainMask m(d);
  for (auto& b : m.values()) b = 1;
  return m;
}

std::vector<SubjectMeta> pool(int n, std::uint64_t seed, bool identical = false) {
  Rng rng(seed);
  std::vector<SubjectMeta> out;
  for (int i = 0; i < n; ++i) {
    SubjectMeta m;
    m.subject_id = "c" + std::to_string(i);
    m.age = identical ? 60.0 : rng.normal(61, 9);
    m.sex = identical ? Sex::kMale : (i % 5 < 2 ? Sex::kFemale : Sex::kMale);
    out.push_back(m);
  }
  return out;
}

}  // namespace

TEST_CASE("axial slice band") {
  CHECK(slice_band(121, 40) == std::pair{40, 40});
  const Volume v = ramp({121, 6, 5}, "a");
  const auto slices = extract_axial_slices(v, 40);
  REQUIRE(slices.size() == 40);
  CHECK(slices.front().slice_index == 40);
  CHECK(slices.back().slice_index == 79);
  for (std::size_t i = 1; i < slices.size(); ++i) {
    CHECK(slices[i].slice_index == slices[i - 1].slice_index + 1);
  }
  CHECK(slices[3].pixels[1 * 30 + 2 * 5 + 4] == v.at(1, 43, 2, 4));

  const auto all = extract_axial_slices(v, 121);
  CHECK(all.front().slice_index == 0);
  CHECK(all.size() == 121);
  CHECK_THROWS_AS(extract_axial_slices(v, 122), Error);
  CHECK(41 * static_cast<int>(slices.size()) == 1640);

  for (int d = 1; d <= 30; ++d) {
    for (int c = 1; c <= d; ++c) {
      const auto [first, count] = slice_band(d, c);
      const int below = first;
      const int above = d - (first + count);
      CHECK(std::abs(below - above) <= 1);
    }
  }
}

TEST_CASE("patch eligibility and extraction") {
  const Dims d{3, 20, 20};
  BrainMask mask(d);
  mask.set(1, 10, 10, true);
  const Volume v = ramp(d, "a");
  CHECK_THROWS_AS(extract_patches(v, mask, 1, 15, 1), Error);

  // a single 15x15 block at z=1 leaves exactly one eligible centre
  for (int y = 3; y < 18; ++y) {
    for (int x = 2; x < 17; ++x) mask.set(1, y, x, true);
  }
  const auto centres = eligible_patch_centers(mask, 15);
  REQUIRE(centres.size() == 1);
  CHECK(centres[0] == Voxel{1, 10, 9});
  const auto one = extract_patches(v, mask, 1, 15, 5);
  REQUIRE(one.size() == 1);
  CHECK(one[0].center == Voxel{1, 10, 9});
  const auto many = extract_patches(v, mask, 4, 15, 5);
  CHECK(many.size() == 4);

  const Volume big = ramp({4, 30, 28}, "b");
  const BrainMask full = full_mask(big.dims());
  const auto elig = eligible_patch_centers(full, 15);
  CHECK(elig.size() == 4u * 16 * 14);
  const auto patches = extract_patches(big, full, 100, 15, 9);
  CHECK(patches.size() == 100);
  std::set<Voxel> seen;
  for (const auto& p : patches) {
    seen.insert(p.center);
    CHECK(p.center.y >= 7);
    CHECK(p.center.y < 30 - 7);
    CHECK(p.center.x >= 7);
    CHECK(p.center.x < 28 - 7);
    CHECK(extract_patch(big, p.center, 15).pixels == p.pixels);
  }
  CHECK(seen.size() == 100);
  const auto again = extract_patches(big, full, 100, 15, 9);
  for (std::size_t i = 0; i < 100; ++i) CHECK(again[i].center == patches[i].center);
  CHECK(40 * 15000 == 600000);
}

TEST_CASE("similar pairs") {
  const Dims d{2, 16, 16};
  const Volume a = ramp(d, "a");
  const Volume b = ramp(d, "b", 0.1f);
  BrainMask m(d);
  for (int y = 1; y < 16; ++y) {
    for (int x = 1; x < 16; ++x) m.set(0, y, x, true);
  }
  std::vector<std::vector<PatchSample>> by_subject{extract_patches(a, m, 1, 15, 1)};
  std::vector<const Volume*> vols{&a};
  CHECK_THROWS_AS(build_similar_pairs(by_subject, vols, 1), Error);

  by_subject.push_back(extract_patches(b, m, 1, 15, 2));
  vols.push_back(&b);
  const auto pairs = build_similar_pairs(by_subject, vols, 3);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].left.subject_id == "a");
  CHECK(pairs[0].right.subject_id == "b");
  CHECK(pairs[1].left.subject_id == "b");
  CHECK(pairs[1].right.subject_id == "a");
  CHECK(pairs[0].left.center == Voxel{0, 8, 8});
  CHECK(pairs[0].right.center == Voxel{0, 8, 8});
  CHECK(pairs[0].left.pixels != pairs[0].right.pixels);

  PhantomSpec spec;
  spec.n_controls = 5;
  spec.n_patients = 1;
  spec.dims = {10, 28, 24};
  spec.lesion_radius = 2;
  const auto cohort = synth_cohort(spec, 4);
  std::vector<std::vector<PatchSample>> ps;
  std::vector<const Volume*> vs;
  for (int i = 0; i < 5; ++i) {
    ps.push_back(extract_patches(cohort.volumes[i], compute_brain_mask(cohort.volumes[i]), 30,
                                 15, 100 + i));
    vs.push_back(&cohort.volumes[i]);
  }
  const auto p1 = build_similar_pairs(ps, vs, 77);
  const auto p2 = build_similar_pairs(ps, vs, 77);
  REQUIRE(p1.size() == 150);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].left.center == p1[i].right.center);
    CHECK(p1[i].left.subject_id != p1[i].right.subject_id);
    CHECK(p1[i].right.subject_id == p2[i].right.subject_id);
    CHECK(p1[i].right.pixels == p2[i].right.pixels);
  }
}

TEST_CASE("bootstrap splits") {
  const auto controls = pool(56, 8);
  const auto plans = bootstrap_split(controls, 10, 41, 15, 2024);
  REQUIRE(plans.size() == 10);
  for (const auto& p : plans) {
    CHECK(p.train_ids.size() == 41);
    CHECK(p.test_ids.size() == 15);
    std::set<std::string> train(p.train_ids.begin(), p.train_ids.end());
    for (const auto& id : p.test_ids) CHECK(train.count(id) == 0);
    CHECK(std::abs(p.train_mean_age - p.test_mean_age) <= 2.0);
    CHECK(p.train_female_fraction >= 0.30);
    CHECK(p.train_female_fraction <= 0.50);
    CHECK(p.test_female_fraction >= 0.30);
    CHECK(p.test_female_fraction <= 0.50);
  }
  const auto again = bootstrap_split(controls, 10, 41, 15, 2024);
  for (std::size_t i = 0; i < plans.size(); ++i) CHECK(again[i].train_ids == plans[i].train_ids);
  // plan k does not depend on how many plans were requested
  CHECK(bootstrap_split(controls, 3, 41, 15, 2024)[2].test_ids == plans[2].test_ids);

  const auto same = bootstrap_split(pool(56, 1, true), 4, 41, 15, 3);
  for (const auto& p : same) CHECK(p.attempts == 1);

  CHECK_THROWS_AS(bootstrap_split(controls, 1, 40, 15, 1), Error);
  BalanceConstraints impossible;
  impossible.max_age_gap = -1.0;
  impossible.max_attempts = 50;
  CHECK_THROWS_AS(bootstrap_split(controls, 1, 41, 15, 1, impossible), Error);
}
