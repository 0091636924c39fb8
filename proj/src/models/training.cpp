#include "anomap/models/training.hpp"

#include <cmath>
#include <numeric>

#include "anomap/models/losses.hpp"
#include "anomap/rng.hpp"

namespace anomap::models {

TrainConfig ae_defaults() { return {160, 1e-3, 40, 0.0, 0}; }
TrainConfig sae_defaults() { return {30, 1e-3, 225, 0.005, 0}; }

Tensor<float> slices_to_tensor(std::span<const SliceSample> slices) {
  require(!slices.empty(), ErrorKind::kInvalidArgument, "no slices to pack");
  const SliceSample& first = slices.front();
  const Shape s{static_cast<int>(slices.size()), first.channels, first.height, first.width};
  std::vector<float> data;
  data.reserve(s.size());
  for (const auto& sl : slices) {
    require(sl.channels == first.channels && sl.height == first.height &&
                sl.width == first.width,
            ErrorKind::kShape, "slices of differing shape in one batch");
    data.insert(data.end(), sl.pixels.begin(), sl.pixels.end());
  }
  return Tensor<float>(s, std::move(data));
}

Tensor<float> patches_to_tensor(std::span<const PatchSample> patches) {
  require(!patches.empty(), ErrorKind::kInvalidArgument, "no patches to pack");
  const PatchSample& first = patches.front();
  const Shape s{static_cast<int>(patches.size()), first.channels, first.size, first.size};
  std::vector<float> data;
  data.reserve(s.size());
  for (const auto& p : patches) {
    require(p.channels == first.channels && p.size == first.size, ErrorKind::kShape,
            "patches of differing shape in one batch");
    data.insert(data.end(), p.pixels.begin(), p.pixels.end());
  }
  return Tensor<float>(s, std::move(data));
}

int batches_per_epoch(std::size_t samples, int batch_size) {
  require(batch_size > 0, ErrorKind::kInvalidArgument, "batch size must be > 0");
  return static_cast<int>((samples + batch_size - 1) / batch_size);
}

namespace {

void check_config(const TrainConfig& config) {
  require(config.epochs > 0, ErrorKind::kInvalidArgument, "epochs must be > 0");
  require(config.batch_size > 0, ErrorKind::kInvalidArgument, "batch size must be > 0");
  require(config.learning_rate > 0.0, ErrorKind::kInvalidArgument, "learning rate must be > 0");
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0xE90C0000ULL + static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order.begin(), order.end());
  return order;
}

void check_loss(double loss, int epoch, int batch) {
  require(std::isfinite(loss), ErrorKind::kNumeric,
          "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(batch));
}

}  // namespace

TrainResult<AEModel<float>> train_ae(const std::vector<SliceSample>& slices,
                                     const TrainConfig& config,
                                     const EpochHook<AEModel<float>>& hook) {
  check_config(config);
  require(!slices.empty(), ErrorKind::kInvalidArgument, "train_ae: empty slice set");
  TrainResult<AEModel<float>> result{
      AEModel<float>(slices.front().channels, slices.front().height, slices.front().width),
      {},
      {}};
  result.model.initialize(config.seed);
  result.optimizer.config.learning_rate = config.learning_rate;
  auto params = result.model.params();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = epoch_order(slices.size(), config.seed, epoch);
    double total = 0.0;
    int batch_id = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_id) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<SliceSample> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(slices[order[i]]);
      const Tensor<float> x = slices_to_tensor(batch);
      result.model.zero_grad();
      const Tensor<float> x_hat = result.model.forward(x, Mode::kTrain);
      const double loss = ae_loss(x, x_hat);
      check_loss(loss, epoch, batch_id);
      result.model.backward(ae_loss_grad(x, x_hat));
      nn::adam_step<float>(params, result.optimizer);
      total += loss * static_cast<double>(end - start);
    }
    result.epoch_loss.push_back(total / static_cast<double>(slices.size()));
    if (hook) hook(epoch, result.epoch_loss.back(), result.model, result.optimizer);
  }
  result.model.encoder().clear_cache();
  result.model.decoder().clear_cache();
  return result;
}

TrainResult<SAEModel<float>> train_sae(const std::vector<PatchPair>& pairs,
                                       const TrainConfig& config,
                                       const EpochHook<SAEModel<float>>& hook) {
  check_config(config);
  require(!pairs.empty(), ErrorKind::kInvalidArgument, "train_sae: empty pair set");
  const PatchSample& first = pairs.front().left;
  TrainResult<SAEModel<float>> result{SAEModel<float>(first.channels, first.size), {}, {}};
  result.model.initialize(config.seed);
  result.optimizer.config.learning_rate = config.learning_rate;
  auto params = result.model.params();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = epoch_order(pairs.size(), config.seed, epoch);
    double total = 0.0;
    int batch_id = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_id) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<PatchSample> left, right;
      left.reserve(end - start);
      right.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        left.push_back(pairs[order[i]].left);
        right.push_back(pairs[order[i]].right);
      }
      const Tensor<float> x1 = patches_to_tensor(left);
      const Tensor<float> x2 = patches_to_tensor(right);
      result.model.zero_grad();
      const auto out = result.model.forward_pair(x1, x2, Mode::kTrain);
      SaeLossGrads<float> grads;
      const SaeLossTerms terms =
          sae_loss(x1, x2, out.recon1, out.recon2, out.z1, out.z2, config.alpha, &grads);
      check_loss(terms.total, epoch, batch_id);
      result.model.backward_pair(grads.recon1, grads.recon2, grads.z1, grads.z2);
      nn::adam_step<float>(params, result.optimizer);
      total += terms.total * static_cast<double>(end - start);
    }
    result.epoch_loss.push_back(total / static_cast<double>(pairs.size()));
    if (hook) hook(epoch, result.epoch_loss.back(), result.model, result.optimizer);
  }
  result.model.branch(0).encoder.clear_cache();
  result.model.branch(0).decoder.clear_cache();
  return result;
}

SliceSample reconstruct_slice(AEModel<float>& model, const SliceSample& slice) {
  const Tensor<float> y = model.forward(slices_to_tensor(std::span(&slice, 1)), Mode::kInfer);
  SliceSample out = slice;
  out.pixels.assign(y.values().begin(), y.values().end());
  return out;
}

PatchSample reconstruct_patch(SAEModel<float>& model, const PatchSample& patch) {
  const Tensor<float> y = model.reconstruct(patches_to_tensor(std::span(&patch, 1)));
  PatchSample out = patch;
  out.pixels.assign(y.values().begin(), y.values().end());
  return out;
}

}  // namespace anomap::models
