#include <doctest.h>

#include <cmath>
#include <limits>

#include "anomap/models/losses.hpp"
#include "anomap/models/serialize.hpp"
#include "anomap/models/training.hpp"
#include "anomap/nn/gradcheck.hpp"
#include "support.hpp"

using namespace anomap;
using namespace anomap::models;
using nn::Shape;
using testing::random_tensor;

namespace {

std::vector<SliceSample> synthetic_slices(int count, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SliceSample> out;
  for (int i = 0; i < count; ++i) {
    SliceSample s{"s" + std::to_string(i), i, 2, h, w, {}};
    const double phase = rng.uniform(0, 3);
    for (int c = 0; c < 2; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double v = 0.5 + 0.3 * std::sin(0.4 * x + 0.3 * y + phase + c);
          s.pixels.push_back(static_cast<float>(v + rng.uniform(-0.02, 0.02)));
        }
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<PatchPair> synthetic_pairs(int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PatchPair> out;
  for (int i = 0; i < count; ++i) {
    PatchPair p;
    p.left = {"a", {0, 7, 7}, 2, 15, {}};
    p.right = {"b", {0, 7, 7}, 2, 15, {}};
    const double phase = rng.uniform(0, 3);
    for (int k = 0; k < 2 * 15 * 15; ++k) {
      const double base = 0.5 + 0.3 * std::sin(0.5 * (k % 15) + 0.2 * (k / 15) + phase);
      p.left.pixels.push_back(static_cast<float>(base + rng.uniform(-0.02, 0.02)));
      p.right.pixels.push_back(static_cast<float>(base + rng.uniform(-0.02, 0.02)));
    }
    out.push_back(std::move(p));
  }
  return out;
}

void zero_last_layer(Sequential<float>& decoder) {
  for (std::size_t i = decoder.size(); i-- > 0;) {
    auto ps = decoder.layer(i).params();
    if (!ps.empty()) {
      for (auto* p : ps) p->value.fill(0.0f);
      return;
    }
  }
}

}  // namespace

TEST_CASE("AE shapes: canonical bottleneck and mirrored output") {
  AEModel<float> ae(2, 121, 145);
  CHECK(ae.latent_shape() == Shape{1, 256, 4, 5});
  ae.initialize(1);
  Rng rng(1);
  const auto x = random_tensor<float>({1, 2, 121, 145}, rng, 0, 1);
  const auto y = ae.forward(x, nn::Mode::kTrain);
  CHECK(y.shape() == x.shape());
  CHECK(ae.latent().shape() == Shape{1, 256, 4, 5});

  for (auto [h, w] : {std::pair{56, 48}, {8, 10}, {33, 17}, {64, 64}}) {
    AEModel<float> m(2, h, w);
    m.initialize(2);
    const auto xi = random_tensor<float>({2, 2, h, w}, rng, 0, 1);
    CHECK(m.forward(xi, nn::Mode::kTrain).shape() == xi.shape());
  }
}

TEST_CASE("SAE shapes") {
  SAEModel<float> sae(2, 15);
  CHECK(sae.latent_shape() == Shape{1, 16, 2, 2});
  sae.initialize(3);
  Rng rng(3);
  const auto x = random_tensor<float>({4, 2, 15, 15}, rng, 0, 1);
  CHECK(sae.encode(x).shape() == Shape{4, 16, 2, 2});
  CHECK(sae.reconstruct(x).shape() == x.shape());
}

TEST_CASE("AE loss values") {
  Tensor<float> x({1, 1, 1, 2}, std::vector<float>{1, 1});
  Tensor<float> z({1, 1, 1, 2}, std::vector<float>{0, 0});
  CHECK(ae_loss(x, x) == 0.0);
  CHECK(ae_loss(x, z) == 2.0);

  Rng rng(4);
  const auto a = random_tensor<double>({3, 2, 4, 5}, rng);
  const auto b = random_tensor<double>({3, 2, 4, 5}, rng);
  double brute = 0;
  for (std::size_t i = 0; i < a.size(); ++i) brute += std::abs(a[i] - b[i]);
  CHECK(ae_loss(a, b) == doctest::Approx(brute / 3).epsilon(1e-14));
  CHECK_THROWS_AS(ae_loss(a, Tensor<double>({3, 2, 4, 4})), Error);
}

TEST_CASE("cosine similarity") {
  const std::vector<double> u{1, 2, -3}, v{3, 0, 1}, neg{-1, -2, 3}, zero{0, 0, 0};
  CHECK(cosine_sim<double>(u, u).value == 1.0);
  CHECK(cosine_sim<double>(u, v).value == 0.0);
  CHECK(cosine_sim<double>(u, neg).value == -1.0);
  const auto d = cosine_sim<double>(zero, zero);
  CHECK(d.degenerate);
  CHECK(d.value == 0.0);
  CHECK(cosine_sim<double>(u, zero).degenerate);
}

TEST_CASE("SAE loss identities and oracle") {
  Rng rng(6);
  const auto x1 = random_tensor<float>({2, 2, 15, 15}, rng, 0, 1);
  const auto x2 = random_tensor<float>({2, 2, 15, 15}, rng, 0, 1);
  const auto z = random_tensor<float>({2, 16, 2, 2}, rng);
  CHECK(sae_loss(x1, x2, x1, x2, z, z, 0.005).total == -0.005);

  Tensor<float> a({1, 1, 1, 2}, std::vector<float>{1, 0});
  Tensor<float> b({1, 1, 1, 2}, std::vector<float>{0, 2});
  const auto p1 = slice_batch(x1, 0, 1);
  CHECK(sae_loss(p1, p1, p1, p1, a, b, 0.005).total == 0.0);

  const auto d = random_tensor<double>({3, 2, 5, 5}, rng, 0, 1);
  const auto e = random_tensor<double>({3, 2, 5, 5}, rng, 0, 1);
  const auto dh = random_tensor<double>({3, 2, 5, 5}, rng, 0, 1);
  const auto eh = random_tensor<double>({3, 2, 5, 5}, rng, 0, 1);
  const auto z1 = random_tensor<double>({3, 4, 1, 1}, rng);
  const auto z2 = random_tensor<double>({3, 4, 1, 1}, rng);
  double oracle = 0;
  for (int n = 0; n < 3; ++n) {
    double m1 = 0, m2 = 0, dotp = 0, n1 = 0, n2 = 0;
    for (std::size_t i = 0; i < 50; ++i) {
      m1 += std::pow(d.item(n)[i] - dh.item(n)[i], 2);
      m2 += std::pow(e.item(n)[i] - eh.item(n)[i], 2);
    }
    for (std::size_t i = 0; i < 4; ++i) {
      dotp += z1.item(n)[i] * z2.item(n)[i];
      n1 += z1.item(n)[i] * z1.item(n)[i];
      n2 += z2.item(n)[i] * z2.item(n)[i];
    }
    oracle += m1 / 50 + m2 / 50 - 0.3 * dotp / std::sqrt(n1 * n2);
  }
  const auto terms = sae_loss(d, e, dh, eh, z1, z2, 0.3);
  CHECK(terms.total == doctest::Approx(oracle / 3).epsilon(1e-12));

  // dL/dalpha = -mean cos, and larger alpha lowers the loss when cos > 0
  const double h = 1e-6;
  const double up = sae_loss(d, e, dh, eh, z1, z2, 0.3 + h).total;
  const double down = sae_loss(d, e, dh, eh, z1, z2, 0.3 - h).total;
  CHECK((up - down) / (2 * h) == doctest::Approx(-terms.mean_cosine).epsilon(1e-6));
  const auto zs = random_tensor<double>({3, 4, 1, 1}, rng, 0.1, 1);
  CHECK(sae_loss(d, e, dh, eh, zs, zs, 0.01).total > sae_loss(d, e, dh, eh, zs, zs, 0.02).total);
}

TEST_CASE("AE full-model gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    AEModel<double> ae(2, 8, 10);
    ae.initialize(seed);
    Rng rng(seed * 31);
    // batch 4: with 2 samples the 1x1 bottleneck batchnorm collapses to +-1
    const auto x = random_tensor<double>({4, 2, 8, 10}, rng, 0, 1);
    auto loss = [&] { return ae_loss(x, ae.forward(x, nn::Mode::kTrain)); };
    auto loss_and_grad = [&] {
      ae.zero_grad();
      const auto y = ae.forward(x, nn::Mode::kTrain);
      ae.backward(ae_loss_grad(x, y));
      return ae_loss(x, y);
    };
    nn::GradCheckOptions opts;
    opts.seed = seed;
    const auto params = ae.params();
    const auto report = nn::grad_check(params, loss, loss_and_grad, opts);
    CHECK(report.max_relative_error <= 1e-4);
    CHECK(report.passed);
  }
}

TEST_CASE("SAE full-model gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    SAEModel<double> sae(2, 15);
    sae.initialize(seed);
    Rng rng(seed * 17);
    const auto x1 = random_tensor<double>({2, 2, 15, 15}, rng, 0, 1);
    const auto x2 = random_tensor<double>({2, 2, 15, 15}, rng, 0, 1);
    auto loss = [&] {
      const auto o = sae.forward_pair(x1, x2, nn::Mode::kTrain);
      return sae_loss(x1, x2, o.recon1, o.recon2, o.z1, o.z2, 0.005).total;
    };
    auto loss_and_grad = [&] {
      sae.zero_grad();
      const auto o = sae.forward_pair(x1, x2, nn::Mode::kTrain);
      SaeLossGrads<double> g;
      const auto t = sae_loss(x1, x2, o.recon1, o.recon2, o.z1, o.z2, 0.005, &g);
      sae.backward_pair(g.recon1, g.recon2, g.z1, g.z2);
      return t.total;
    };
    nn::GradCheckOptions opts;
    opts.seed = seed;
    const auto params = sae.params();
    const auto report = nn::grad_check(params, loss, loss_and_grad, opts);
    CHECK(report.max_relative_error <= 1e-4);
    CHECK(report.passed);
  }
}

TEST_CASE("zero loss gives zero gradient") {
  AEModel<double> ae(2, 8, 10);
  ae.initialize(9);
  Rng rng(9);
  const auto x = random_tensor<double>({2, 2, 8, 10}, rng, 0, 1);
  ae.zero_grad();
  const auto y = ae.forward(x, nn::Mode::kTrain);
  ae.backward(ae_loss_grad(y, y));
  for (auto* p : ae.params()) {
    for (double g : p->grad.values()) CHECK(g == 0.0);
  }
}

TEST_CASE("weight sharing and sigmoid range") {
  SAEModel<float> sae;
  sae.initialize(12);
  CHECK(&sae.branch(0) == &sae.branch(1));
  Rng rng(12);
  const auto x = random_tensor<float>({3, 2, 15, 15}, rng, 0, 1);
  const auto out = sae.forward_pair(x, x, nn::Mode::kInfer);
  CHECK(out.recon1.values().size() == out.recon2.values().size());
  for (std::size_t i = 0; i < out.recon1.size(); ++i) CHECK(out.recon1[i] == out.recon2[i]);
  for (std::size_t i = 0; i < out.z1.size(); ++i) CHECK(out.z1[i] == out.z2[i]);
  for (float v : out.recon1.values()) CHECK((v >= 0.0f && v <= 1.0f));

  zero_last_layer(sae.branch(0).decoder);
  const auto flat = sae.reconstruct(x);
  for (float v : flat.values()) CHECK(v == 0.5f);

  AEModel<float> ae(2, 16, 12);
  ae.initialize(12);
  zero_last_layer(ae.decoder());
  const auto xs = random_tensor<float>({2, 2, 16, 12}, rng, 0, 1);
  const auto ys = ae.forward(xs, nn::Mode::kTrain);
  for (float v : ys.values()) CHECK(v == 0.5f);
}

TEST_CASE("training schedule and smoke runs") {
  CHECK(batches_per_epoch(1640, 40) == 41);
  CHECK(batches_per_epoch(41, 40) == 2);
  CHECK(ae_defaults().epochs == 160);
  CHECK(ae_defaults().batch_size == 40);
  CHECK(sae_defaults().epochs == 30);
  CHECK(sae_defaults().batch_size == 225);
  CHECK(sae_defaults().alpha == 0.005);

  const auto slices = synthetic_slices(8, 16, 12, 1);
  TrainConfig cfg{5, 1e-2, 4, 0.0, 7};
  auto run = train_ae(slices, cfg);
  REQUIRE(run.epoch_loss.size() == 5);
  CHECK(run.epoch_loss.back() < run.epoch_loss.front());

  auto again = train_ae(slices, cfg);
  CHECK(nn::encode_checkpoint(to_checkpoint(run.model, &run.optimizer)) ==
        nn::encode_checkpoint(to_checkpoint(again.model, &again.optimizer)));

  const auto pairs = synthetic_pairs(40, 2);
  TrainConfig scfg{5, 3e-3, 10, 0.005, 3};
  const auto srun = train_sae(pairs, scfg);
  REQUIRE(srun.epoch_loss.size() == 5);
  CHECK(srun.epoch_loss.back() < srun.epoch_loss.front());
  for (double l : srun.epoch_loss) CHECK(std::isfinite(l));
}

TEST_CASE("non-finite loss names the batch") {
  auto slices = synthetic_slices(4, 8, 10, 2);
  slices[2].pixels[5] = std::numeric_limits<float>::quiet_NaN();
  try {
    train_ae(slices, TrainConfig{2, 1e-3, 2, 0.0, 1});
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumeric);
    CHECK(std::string(e.what()).find("batch") != std::string::npos);
  }
}

TEST_CASE("model checkpoints round trip") {
  const auto slices = synthetic_slices(4, 16, 12, 3);
  auto run = train_ae(slices, TrainConfig{2, 1e-3, 2, 0.0, 5});
  const auto bytes = nn::encode_checkpoint(to_checkpoint(run.model, &run.optimizer));
  const auto ck = nn::decode_checkpoint(bytes);
  auto restored = ae_from_checkpoint(ck);
  const auto opt = optimizer_from_checkpoint(ck);
  CHECK(opt.step == run.optimizer.step);
  CHECK(opt.first_moment == run.optimizer.first_moment);
  const auto a = reconstruct_slice(run.model, slices[1]);
  const auto b = reconstruct_slice(restored, slices[1]);
  CHECK(a.pixels == b.pixels);
  for (float v : a.pixels) CHECK((v >= 0.0f && v <= 1.0f));
  CHECK_THROWS_AS(sae_from_checkpoint(ck), Error);

  SAEModel<float> sae;
  sae.initialize(4);
  const auto sck = nn::decode_checkpoint(nn::encode_checkpoint(to_checkpoint(sae, nullptr)));
  auto sae2 = sae_from_checkpoint(sck);
  const auto patch = synthetic_pairs(1, 4)[0].left;
  CHECK(reconstruct_patch(sae, patch).pixels == reconstruct_patch(sae2, patch).pixels);

  SliceSample wrong = slices[0];
  wrong.height = 8;
  wrong.pixels.resize(2 * 8 * 12);
  CHECK_THROWS_AS(reconstruct_slice(restored, wrong), Error);
}
