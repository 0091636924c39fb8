#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "anomap/models/autoencoder.hpp"
#include "anomap/models/siamese.hpp"
#include "anomap/nn/adam.hpp"
#include "anomap/sampling.hpp"

namespace anomap::models {

struct TrainConfig {
  int epochs = 160;
  double learning_rate = 1e-3;
  int batch_size = 40;
  double alpha = 0.0;  // siamese cosine weight; unused by the AE
  std::uint64_t seed = 0;
};

/// Published AE schedule: 160 epochs, lr 1e-3, batches of 40 slices.
TrainConfig ae_defaults();
/// Published SAE schedule: 30 epochs, lr 1e-3, batches of 225 pairs, alpha 0.005.
TrainConfig sae_defaults();

template <typename Model>
struct TrainResult {
  Model model;
  nn::AdamState<float> optimizer;
  std::vector<double> epoch_loss;  // mean per-sample loss of each epoch
};

template <typename Model>
using EpochHook = std::function<void(int epoch, double mean_loss, Model& model,
                                     const nn::AdamState<float>& optimizer)>;

/// Packs slices / patches into NCHW tensors.
Tensor<float> slices_to_tensor(std::span<const SliceSample> slices);
Tensor<float> patches_to_tensor(std::span<const PatchSample> patches);

/// Number of mini-batches per epoch (last partial batch included).
int batches_per_epoch(std::size_t samples, int batch_size);

/// Seeded mini-batch Adam training. Every epoch reshuffles with a stream
/// derived from (seed, epoch). A non-finite batch loss aborts with kNumeric
/// naming the epoch and batch.
TrainResult<AEModel<float>> train_ae(const std::vector<SliceSample>& slices,
                                     const TrainConfig& config,
                                     const EpochHook<AEModel<float>>& hook = {});
TrainResult<SAEModel<float>> train_sae(const std::vector<PatchPair>& pairs,
                                       const TrainConfig& config,
                                       const EpochHook<SAEModel<float>>& hook = {});

SliceSample reconstruct_slice(AEModel<float>& model, const SliceSample& slice);
PatchSample reconstruct_patch(SAEModel<float>& model, const PatchSample& patch);

}  // namespace anomap::models
