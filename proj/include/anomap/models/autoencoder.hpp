#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "anomap/nn/sequential.hpp"

namespace anomap::models {

using nn::Mode;
using nn::Sequential;
using nn::Shape;
using nn::Tensor;

/// Slice auto-encoder: five stride-2 3x3 convolutions (conv -> batchnorm ->
/// ReLU) down to the bottleneck, then five transposed convolutions whose
/// output padding reproduces the encoder's per-layer sizes exactly, ending in
/// a sigmoid. Convolutions followed by batchnorm carry no bias.
template <typename T>
class AEModel {
 public:
  static constexpr std::array<int, 5> kLadder{16, 32, 64, 128, 256};

  AEModel(int channels, int height, int width);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  Shape latent_shape() const;
  /// (h, w) at the input and after each encoder stage.
  const std::vector<std::pair<int, int>>& stage_sizes() const { return sizes_; }

  void initialize(std::uint64_t seed);

  /// Reconstruction of `x`; the bottleneck activation is kept in latent().
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_reconstruction);
  const Tensor<T>& latent() const { return latent_; }

  std::vector<nn::Param<T>*> params();
  std::vector<Tensor<T>*> buffers();
  void zero_grad();

  Sequential<T>& encoder() { return encoder_; }
  Sequential<T>& decoder() { return decoder_; }

 private:
  int channels_;
  int height_;
  int width_;
  std::vector<std::pair<int, int>> sizes_;
  Sequential<T> encoder_{"encoder"};
  Sequential<T> decoder_{"decoder"};
  Tensor<T> latent_;
};

}  // namespace anomap::models
