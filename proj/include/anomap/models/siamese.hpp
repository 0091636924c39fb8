#pragma once

#include <cstdint>
#include <vector>

#include "anomap/nn/sequential.hpp"

namespace anomap::models {

using nn::Mode;
using nn::Sequential;
using nn::Shape;
using nn::Tensor;

/// One auto-encoder branch of the siamese model.
///   encoder: conv3x3(16, valid) -> maxpool2 -> conv3x3(16, valid) -> conv3x3(16, valid)
///   decoder: conv3x3(16, full) -> conv3x3(16, full) -> upsample2 -> conv3x3(16, full)
///            -> conv2x2(C, full) -> sigmoid
/// ReLU follows every convolution except the last. For a 15x15 patch the
/// latent is 16x2x2 and the reconstruction is 15x15 again.
template <typename T>
struct SAEBranch {
  Sequential<T> encoder{"encoder"};
  Sequential<T> decoder{"decoder"};
};

template <typename T>
class SAEModel {
 public:
  explicit SAEModel(int channels = 2, int patch = 15);

  int channels() const { return channels_; }
  int patch() const { return patch_; }
  Shape latent_shape() const;

  /// Both siamese branches are this one parameter set.
  SAEBranch<T>& branch(int /*index*/) { return branch_; }

  void initialize(std::uint64_t seed);

  struct PairOutput {
    Tensor<T> recon1, recon2, z1, z2;
  };

  /// Runs both patches through the shared branch as one stacked batch.
  PairOutput forward_pair(const Tensor<T>& x1, const Tensor<T>& x2, Mode mode);
  void backward_pair(const Tensor<T>& g_recon1, const Tensor<T>& g_recon2,
                     const Tensor<T>& g_z1, const Tensor<T>& g_z2);

  /// Inference-mode reconstruction of a batch of patches.
  Tensor<T> reconstruct(const Tensor<T>& x);
  Tensor<T> encode(const Tensor<T>& x);

  std::vector<nn::Param<T>*> params();
  void zero_grad();

 private:
  int channels_;
  int patch_;
  SAEBranch<T> branch_;
};

}  // namespace anomap::models
