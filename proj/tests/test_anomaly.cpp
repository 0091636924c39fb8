#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "anomap/anomaly.hpp"
#include "anomap/mvol.hpp"
#include "anomap/phantom.hpp"
#include "anomap/rng.hpp"
#include "anomap/sampling.hpp"

using namespace anomap;
using nn::Tensor;

namespace {

Volume random_volume(Dims d, std::uint64_t seed, const std::string& id = "v") {
  Volume v(id, d, 2);
  Rng rng(seed);
  for (auto& x : v.data()) x = static_cast<float>(rng.uniform());
  return v;
}

BrainMask ellipse_mask(Dims d) {
  BrainMask m(d);
  for (int z = 0; z < d.depth; ++z) {
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) {
        const double a = (y - d.height / 2.0) / (0.48 * d.height);
        const double b = (x - d.width / 2.0) / (0.48 * d.width);
        m.set(z, y, x, a * a + b * b <= 1.0);
      }
    }
  }
  return m;
}

BrainMask full_mask(Dims d) {
  BrainMask m(d);
  for (auto& b : m.values()) b = 1;
  return m;
}

Tensor<float> identity(const Tensor<float>& x) { return x; }

// Deterministic imperfect reconstructor: output depends on the content and on
// the pixel position inside the item.
Tensor<float> wobble(const Tensor<float>& x) {
  Tensor<float> y = x;
  const auto& s = x.shape();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int yy = 0; yy < s.h; ++yy) {
        for (int xx = 0; xx < s.w; ++xx) {
          y.at(n, c, yy, xx) = 0.8f * x.at(n, c, yy, xx) + 0.01f * ((yy * 3 + xx + c) % 7);
        }
      }
    }
  }
  return y;
}

ErrorMap random_error_map(Dims d, std::uint64_t seed, const std::string& id) {
  ErrorMap m;
  m.subject_id = id;
  m.dims = d;
  m.coverage = ellipse_mask(d);
  m.joint_error.assign(d.voxels(), 0.0f);
  m.model_id = "model-x";
  Rng rng(seed);
  for (std::size_t k = 0; k < d.voxels(); ++k) {
    if (m.coverage.values()[k]) m.joint_error[k] = static_cast<float>(rng.uniform(0, 0.5));
  }
  return m;
}

}  // namespace

TEST_CASE("joint_error") {
  const std::vector<float> zero{0, 0}, d34{3, 4};
  CHECK(joint_error(zero, d34) == 5.0f);
  CHECK(joint_error(d34, d34) == 0.0f);
  CHECK(joint_error(std::vector<float>{0.25f}, std::vector<float>{-0.5f}) == 0.75f);
  try {
    joint_error(zero, std::vector<float>{1.0f});
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShape);
  }
  // scaling the differences by k scales the error by k
  const std::vector<float> d{0.1f, -0.3f}, d2{0.2f, -0.6f};
  CHECK(joint_error(zero, d2) == doctest::Approx(2.0 * joint_error(zero, d)).epsilon(1e-6));
}

TEST_CASE("slice error maps") {
  const Dims d{12, 8, 10};
  const Volume v = random_volume(d, 3);
  const BrainMask mask = ellipse_mask(d);
  const ErrorMap zero = error_volume_slices(v, mask, 6, identity);
  CHECK(std::all_of(zero.joint_error.begin(), zero.joint_error.end(),
                    [](float e) { return e == 0.0f; }));

  const ErrorMap m = error_volume_slices(v, mask, 6, wobble, 4);
  const auto [first, count] = slice_band(12, 6);
  std::size_t expected = 0;
  for (int z = 0; z < d.depth; ++z) {
    const bool in_band = z >= first && z < first + count;
    const SliceSample s = axial_slice(v, z);
    const Tensor<float> x({1, 2, d.height, d.width}, s.pixels);
    const Tensor<float> y = wobble(x);
    for (int yy = 0; yy < d.height; ++yy) {
      for (int xx = 0; xx < d.width; ++xx) {
        const bool covered = m.coverage.at(z, yy, xx);
        CHECK(covered == (in_band && mask.at(z, yy, xx)));
        expected += (in_band && mask.at(z, yy, xx)) ? 1 : 0;
        const float e = m.joint_error[m.coverage.index(z, yy, xx)];
        if (!covered) CHECK(e == 0.0f);
        if (covered) {
          const std::vector<float> in{x.at(0, 0, yy, xx), x.at(0, 1, yy, xx)};
          const std::vector<float> out{y.at(0, 0, yy, xx), y.at(0, 1, yy, xx)};
          CHECK(e == joint_error(in, out));
        }
      }
    }
  }
  CHECK(m.coverage.count() == expected);

  // batch grouping does not change the map
  const ErrorMap one = error_volume_slices(v, mask, 6, wobble, 1);
  CHECK(one.joint_error == m.joint_error);
}

TEST_CASE("AE error maps are per-subject and check the checkpoint shape") {
  const Dims d{6, 8, 10};
  models::AEModel<float> model(2, 8, 10);
  model.initialize(4);
  Rng rng(4);
  Tensor<float> warm({4, 2, 8, 10});
  for (auto& x : warm.values()) x = static_cast<float>(rng.uniform());
  model.forward(warm, nn::Mode::kTrain);  // populates the batchnorm running statistics
  const Volume a = random_volume(d, 1, "a");
  const Volume b = random_volume(d, 2, "b");
  const BrainMask mask = full_mask(d);
  const ErrorMap ma = error_volume_ae(model, a, mask, 4, "ae-1");
  error_volume_ae(model, b, mask, 4, "ae-1");
  const ErrorMap again = error_volume_ae(model, a, mask, 4, "ae-1");
  CHECK(ma.joint_error == again.joint_error);
  CHECK(ma.model == ModelKind::kAE);
  CHECK(ma.model_id == "ae-1");
  CHECK(ma.coverage.count() == 4u * 8 * 10);

  const Volume wrong = random_volume({6, 9, 10}, 1);
  try {
    error_volume_ae(model, wrong, full_mask(wrong.dims()), 4, "ae-1");
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShape);
  }
}

TEST_CASE("patch error maps") {
  const Dims d{3, 30, 32};
  const Volume v = random_volume(d, 5);
  const BrainMask mask = ellipse_mask(d);
  PatchMapOptions center;
  PatchMapOptions overlap;
  overlap.mode = PatchAggregate::kOverlapMean;
  overlap.stride = 3;

  for (const auto& opt : {center, overlap}) {
    const ErrorMap zero = error_volume_patches(v, mask, opt, identity);
    CHECK(zero.coverage.count() > 0);
    CHECK(std::all_of(zero.joint_error.begin(), zero.joint_error.end(),
                      [](float e) { return e == 0.0f; }));
    const ErrorMap m = error_volume_patches(v, mask, opt, wobble);
    for (std::size_t k = 0; k < d.voxels(); ++k) {
      if (m.coverage.values()[k]) CHECK(mask.values()[k]);
      CHECK(m.joint_error[k] >= 0.0f);
    }
  }

  const ErrorMap c = error_volume_patches(v, mask, center, wobble);
  const auto centres = eligible_patch_centers(mask, 15);
  CHECK(c.coverage.count() == centres.size());
  for (const auto& p : centres) {
    const Tensor<float> x({1, 2, 15, 15}, extract_patch(v, p, 15).pixels);
    const Tensor<float> y = wobble(x);
    const std::vector<float> in{x.at(0, 0, 7, 7), x.at(0, 1, 7, 7)};
    const std::vector<float> out{y.at(0, 0, 7, 7), y.at(0, 1, 7, 7)};
    CHECK(c.joint_error[c.coverage.index(p.z, p.y, p.x)] == joint_error(in, out));
  }

  BrainMask empty(d);
  CHECK_THROWS_AS(error_volume_patches(v, empty, center, identity), Error);
}

TEST_CASE("single eligible centre: both modes agree there") {
  const Dims d{2, 20, 20};
  BrainMask mask(d);
  for (int y = 3; y < 18; ++y) {
    for (int x = 2; x < 17; ++x) mask.set(1, y, x, true);
  }
  const Volume v = random_volume(d, 9);
  PatchMapOptions overlap;
  overlap.mode = PatchAggregate::kOverlapMean;
  const ErrorMap c = error_volume_patches(v, mask, {}, wobble);
  const ErrorMap o = error_volume_patches(v, mask, overlap, wobble);
  CHECK(c.coverage.count() == 1);
  CHECK(o.coverage.count() == 225);
  const std::size_t k = c.coverage.index(1, 10, 9);
  CHECK(c.coverage.values()[k]);
  CHECK(c.joint_error[k] == o.joint_error[k]);
}

TEST_CASE("overlap-mean with stride 15 equals direct per-tile errors") {
  const Dims d{2, 45, 30};
  const Volume v = random_volume(d, 11);
  const BrainMask mask = full_mask(d);
  PatchMapOptions tiles;
  tiles.mode = PatchAggregate::kOverlapMean;
  tiles.stride = 15;
  tiles.batch = 4;
  const ErrorMap m = error_volume_patches(v, mask, tiles, wobble);
  CHECK(m.coverage.count() == d.voxels());
  for (int z = 0; z < 2; ++z) {
    for (int ty = 0; ty < 3; ++ty) {
      for (int tx = 0; tx < 2; ++tx) {
        const Voxel centre{z, 7 + 15 * ty, 7 + 15 * tx};
        const PatchSample p = extract_patch(v, centre, 15);
        const Tensor<float> x({1, 2, 15, 15}, p.pixels);
        const Tensor<float> y = wobble(x);
        for (int py = 0; py < 15; ++py) {
          for (int px = 0; px < 15; ++px) {
            const std::vector<float> in{x.at(0, 0, py, px), x.at(0, 1, py, px)};
            const std::vector<float> out{y.at(0, 0, py, px), y.at(0, 1, py, px)};
            const std::size_t k = m.coverage.index(z, 15 * ty + py, 15 * tx + px);
            CHECK(m.joint_error[k] == joint_error(in, out));
          }
        }
      }
    }
  }
}

TEST_CASE("SAE error maps check the checkpoint") {
  models::SAEModel<float> model(2, 15);
  model.initialize(2);
  const Dims d{2, 20, 20};
  const Volume v = random_volume(d, 1);
  const ErrorMap m = error_volume_sae(model, v, full_mask(d), {}, "sae-1");
  CHECK(m.model == ModelKind::kSAE);
  CHECK(m.coverage.count() == 2u * 6 * 6);
  PatchMapOptions other;
  other.patch = 13;
  CHECK_THROWS_AS(error_volume_sae(model, v, full_mask(d), other, "sae-1"), Error);
}

TEST_CASE("linear-interpolation quantile") {
  std::vector<float> hundred;
  for (int i = 1; i <= 100; ++i) hundred.push_back(static_cast<float>(i));
  std::reverse(hundred.begin(), hundred.end());
  CHECK(quantile_linear(hundred, 0.98) == doctest::Approx(98.02).epsilon(1e-12));
  CHECK(quantile_linear(hundred, 0.5) == doctest::Approx(50.5).epsilon(1e-12));
  CHECK_THROWS_AS(quantile_linear(hundred, 1.0), Error);
  CHECK_THROWS_AS(quantile_linear(hundred, 0.0), Error);
  CHECK_THROWS_AS(quantile_linear({}, 0.5), Error);
  CHECK(quantile_linear(std::vector<float>(17, 0.3f), 0.98) == doctest::Approx(0.3f));
  CHECK(quantile_linear({4.0f}, 0.7) == 4.0);

  // exact agreement with a full sort
  Rng rng(12345);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<float> values(100000);
    for (auto& x : values) x = static_cast<float>(rng.normal(0, 1));
    std::vector<float> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    for (double q : {0.98, 0.5, 0.01, 0.123456, 0.999}) {
      const double h = (sorted.size() - 1) * q;
      const auto lo = static_cast<std::size_t>(std::floor(h));
      const double a = sorted[lo], b = sorted[lo + 1];
      CHECK(quantile_linear(values, q) == a + (h - static_cast<double>(lo)) * (b - a));
    }
  }
}

TEST_CASE("abnormality threshold and binarization") {
  const Dims d{4, 20, 24};
  std::vector<ErrorMap> controls;
  for (int i = 0; i < 5; ++i) controls.push_back(random_error_map(d, 40 + i, "c" + std::to_string(i)));
  const AbnormalityThreshold t = abnormality_threshold(controls, 0.98, "split-01/train");
  CHECK(t.pool_size == 5 * ellipse_mask(d).count());
  CHECK(t.value >= 0.0);
  CHECK(t.model_id == "model-x");
  CHECK(t.population_id == "split-01/train");

  // direct count on the defining pool
  std::size_t above = 0;
  for (const auto& m : controls) above += binarize(m, t.value).abnormal.count();
  const double frac = static_cast<double>(above) / static_cast<double>(t.pool_size);
  CHECK(std::abs(frac - 0.02) <= 2.0 / static_cast<double>(t.pool_size));

  const ErrorMap& m = controls.front();
  const float top = *std::max_element(m.joint_error.begin(), m.joint_error.end());
  CHECK(binarize(m, top).abnormal.count() == 0);
  CHECK(binarize(m, top + 1.0).abnormal.count() == 0);
  CHECK(binarize(m, -1.0).abnormal.count() == m.coverage.count());

  // abnormal ⊆ coverage, and counts never grow with the threshold
  std::size_t previous = m.coverage.count() + 1;
  for (double thr = -0.1; thr < 0.6; thr += 0.01) {
    const BinaryAnomalyMap b = binarize(m, thr);
    for (std::size_t k = 0; k < d.voxels(); ++k) {
      if (b.abnormal.values()[k]) CHECK(b.coverage.values()[k]);
    }
    CHECK(b.abnormal.count() <= previous);
    previous = b.abnormal.count();
  }

  // doubling errors and threshold leaves the binary map unchanged
  ErrorMap twice = m;
  for (auto& e : twice.joint_error) e *= 2.0f;
  for (double thr : {0.05, 0.2, 0.45}) {
    const auto a = binarize(m, thr).abnormal.values();
    const auto b = binarize(twice, 2 * thr).abnormal.values();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }

  // all-equal pool marks nothing
  ErrorMap flat = m;
  for (std::size_t k = 0; k < d.voxels(); ++k) {
    if (flat.coverage.values()[k]) flat.joint_error[k] = 0.25f;
  }
  const auto ft = abnormality_threshold(std::span(&flat, 1), 0.98, "p");
  CHECK(ft.value == doctest::Approx(0.25));
  CHECK(binarize(flat, ft.value).abnormal.count() == 0);

  CHECK_THROWS_AS(abnormality_threshold({}, 0.98, "p"), Error);
  ErrorMap other = random_error_map(d, 1, "x");
  other.model_id = "model-y";
  std::vector<ErrorMap> mixed{m, other};
  CHECK_THROWS_AS(abnormality_threshold(mixed, 0.98, "p"), Error);
}

TEST_CASE("error and binary maps round trip through MVOL and JSON") {
  const ErrorMap m = random_error_map({3, 10, 12}, 7, "subj");
  const Volume v = decode_mvol(encode_mvol(error_map_to_volume(m)));
  const ErrorMap back = error_map_from_volume(v, ModelKind::kSAE, "sae-9");
  CHECK(back.subject_id == "subj");
  CHECK(back.joint_error == m.joint_error);
  CHECK(std::equal(back.coverage.values().begin(), back.coverage.values().end(),
                   m.coverage.values().begin()));

  const BinaryAnomalyMap b = binarize(m, 0.3);
  const BinaryAnomalyMap bb = binary_map_from_volume(binary_map_to_volume(b), 0.3);
  CHECK(std::equal(bb.abnormal.values().begin(), bb.abnormal.values().end(),
                   b.abnormal.values().begin()));
  CHECK(bb.coverage.count() == b.coverage.count());

  AbnormalityThreshold t{0.98, 0.123, 4567, "split-02/train", "ae-3"};
  const auto t2 = threshold_from_json(nlohmann::json::parse(to_json(t).dump()));
  CHECK(t2.value == t.value);
  CHECK(t2.pool_size == 4567);
  CHECK(t2.model_id == "ae-3");
  CHECK_THROWS_AS(threshold_from_json(nlohmann::json{{"q", 0.5}}), Error);
  CHECK(parse_model_kind("sae") == ModelKind::kSAE);
  CHECK(parse_patch_aggregate(to_string(PatchAggregate::kOverlapMean)) ==
        PatchAggregate::kOverlapMean);
  CHECK_THROWS_AS(parse_patch_aggregate("median"), Error);
}
