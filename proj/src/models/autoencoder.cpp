#include "anomap/models/autoencoder.hpp"

#include "anomap/rng.hpp"

namespace anomap::models {

using nn::LayerSpec;

template <typename T>
AEModel<T>::AEModel(int channels, int height, int width)
    : channels_(channels), height_(height), width_(width) {
  require(channels > 0, ErrorKind::kInvalidArgument, "AE needs at least one channel");
  sizes_.emplace_back(height, width);
  int in = channels;
  for (int out : kLadder) {
    encoder_.add(LayerSpec::conv_explicit(in, out, 3, 2, 1, false));
    encoder_.add(LayerSpec::batchnorm(out));
    encoder_.add(LayerSpec::relu());
    const auto [h, w] = sizes_.back();
    const Shape s = nn::out_shape(encoder_.layer(encoder_.size() - 3).spec(), Shape{1, in, h, w});
    sizes_.emplace_back(s.h, s.w);
    in = out;
  }
  // Mirror: stage j maps sizes_[5 - j] back to sizes_[4 - j].
  for (int j = 0; j < 5; ++j) {
    const int out = j < 4 ? kLadder[3 - j] : channels;
    const auto [ih, iw] = sizes_[5 - j];
    const auto [th, tw] = sizes_[4 - j];
    const int op_h = th - ((ih - 1) * 2 - 2 + 3);
    const int op_w = tw - ((iw - 1) * 2 - 2 + 3);
    require(op_h >= 0 && op_h < 2 && op_w >= 0 && op_w < 2, ErrorKind::kShape,
            "AE: no mirrored shape plan for input " + std::to_string(height) + "x" +
                std::to_string(width));
    const bool last = j == 4;
    decoder_.add(LayerSpec::conv_transposed(in, out, 3, 2, 1, op_h, op_w, last));
    if (last) {
      decoder_.add(LayerSpec::sigmoid());
    } else {
      decoder_.add(LayerSpec::batchnorm(out));
      decoder_.add(LayerSpec::relu());
    }
    in = out;
  }
}

template <typename T>
Shape AEModel<T>::latent_shape() const {
  return {1, kLadder.back(), sizes_.back().first, sizes_.back().second};
}

template <typename T>
void AEModel<T>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  encoder_.initialize(rng);
  decoder_.initialize(rng);
}

template <typename T>
Tensor<T> AEModel<T>::forward(const Tensor<T>& x, Mode mode) {
  require(x.shape().c == channels_ && x.shape().h == height_ && x.shape().w == width_,
          ErrorKind::kShape,
          "AE expects (" + std::to_string(channels_) + "," + std::to_string(height_) + "," +
              std::to_string(width_) + ") inputs, got " + x.shape().str());
  latent_ = encoder_.forward(x, mode);
  return decoder_.forward(latent_, mode);
}

template <typename T>
Tensor<T> AEModel<T>::backward(const Tensor<T>& grad_reconstruction) {
  return encoder_.backward(decoder_.backward(grad_reconstruction));
}

template <typename T>
std::vector<nn::Param<T>*> AEModel<T>::params() {
  auto out = encoder_.params();
  for (auto* p : decoder_.params()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<Tensor<T>*> AEModel<T>::buffers() {
  auto out = encoder_.buffers();
  for (auto* b : decoder_.buffers()) out.push_back(b);
  return out;
}

template <typename T>
void AEModel<T>::zero_grad() {
  encoder_.zero_grad();
  decoder_.zero_grad();
}

template class AEModel<float>;
template class AEModel<double>;

}  // namespace anomap::models
