#include "anomap/models/siamese.hpp"

#include "anomap/rng.hpp"

namespace anomap::models {

using nn::LayerSpec;
using nn::Padding;

template <typename T>
SAEModel<T>::SAEModel(int channels, int patch) : channels_(channels), patch_(patch) {
  constexpr int kFilters = 16;
  auto& enc = branch_.encoder;
  enc.add(LayerSpec::conv(channels, kFilters, 3, 1, Padding::kValid));
  enc.add(LayerSpec::relu());
  enc.add(LayerSpec::maxpool(2));
  enc.add(LayerSpec::conv(kFilters, kFilters, 3, 1, Padding::kValid));
  enc.add(LayerSpec::relu());
  enc.add(LayerSpec::conv(kFilters, kFilters, 3, 1, Padding::kValid));
  enc.add(LayerSpec::relu());

  auto& dec = branch_.decoder;
  dec.add(LayerSpec::conv(kFilters, kFilters, 3, 1, Padding::kFull));
  dec.add(LayerSpec::relu());
  dec.add(LayerSpec::conv(kFilters, kFilters, 3, 1, Padding::kFull));
  dec.add(LayerSpec::relu());
  dec.add(LayerSpec::upsample(2));
  dec.add(LayerSpec::conv(kFilters, kFilters, 3, 1, Padding::kFull));
  dec.add(LayerSpec::relu());
  dec.add(LayerSpec::conv(kFilters, channels, 2, 1, Padding::kFull));
  dec.add(LayerSpec::sigmoid());

  const Shape in{1, channels, patch, patch};
  const Shape out = dec.out_shape(enc.out_shape(in));
  require(out == in, ErrorKind::kShape,
          "SAE shape plan does not reproduce a " + std::to_string(patch) + "x" +
              std::to_string(patch) + " patch (got " + out.str() + ")");
}

template <typename T>
Shape SAEModel<T>::latent_shape() const {
  return branch_.encoder.out_shape(Shape{1, channels_, patch_, patch_});
}

template <typename T>
void SAEModel<T>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  branch_.encoder.initialize(rng);
  branch_.decoder.initialize(rng);
}

template <typename T>
typename SAEModel<T>::PairOutput SAEModel<T>::forward_pair(const Tensor<T>& x1,
                                                           const Tensor<T>& x2, Mode mode) {
  require(x1.shape() == x2.shape(), ErrorKind::kShape,
          "SAE pair shapes differ: " + x1.shape().str() + " vs " + x2.shape().str());
  require(x1.shape().c == channels_ && x1.shape().h == patch_ && x1.shape().w == patch_,
          ErrorKind::kShape, "SAE expects patches of " + std::to_string(patch_) + "x" +
                                 std::to_string(patch_) + ", got " + x1.shape().str());
  const int b = x1.shape().n;
  const Tensor<T> z = branch_.encoder.forward(concat_batch(x1, x2), mode);
  const Tensor<T> r = branch_.decoder.forward(z, mode);
  return {slice_batch(r, 0, b), slice_batch(r, b, b), slice_batch(z, 0, b), slice_batch(z, b, b)};
}

template <typename T>
void SAEModel<T>::backward_pair(const Tensor<T>& g_recon1, const Tensor<T>& g_recon2,
                                const Tensor<T>& g_z1, const Tensor<T>& g_z2) {
  Tensor<T> gz = branch_.decoder.backward(concat_batch(g_recon1, g_recon2));
  const Tensor<T> gz_cos = concat_batch(g_z1, g_z2);
  require(gz.shape() == gz_cos.shape(), ErrorKind::kShape, "SAE latent gradient shape mismatch");
  for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += gz_cos[i];
  branch_.encoder.backward(gz);
}

template <typename T>
Tensor<T> SAEModel<T>::reconstruct(const Tensor<T>& x) {
  require(x.shape().c == channels_ && x.shape().h == patch_ && x.shape().w == patch_,
          ErrorKind::kShape, "SAE expects patches of " + std::to_string(patch_) + "x" +
                                 std::to_string(patch_) + ", got " + x.shape().str());
  return branch_.decoder.forward(branch_.encoder.forward(x, Mode::kInfer), Mode::kInfer);
}

template <typename T>
Tensor<T> SAEModel<T>::encode(const Tensor<T>& x) {
  return branch_.encoder.forward(x, Mode::kInfer);
}

template <typename T>
std::vector<nn::Param<T>*> SAEModel<T>::params() {
  auto out = branch_.encoder.params();
  for (auto* p : branch_.decoder.params()) out.push_back(p);
  return out;
}

template <typename T>
void SAEModel<T>::zero_grad() {
  branch_.encoder.zero_grad();
  branch_.decoder.zero_grad();
}

template class SAEModel<float>;
template class SAEModel<double>;

}  // namespace anomap::models
