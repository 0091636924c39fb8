#include "anomap/nn/sequential.hpp"

namespace anomap::nn {

template <typename T>
void Sequential<T>::add(const LayerSpec& spec) {
  auto layer = make_layer<T>(spec);
  const std::string prefix = name_ + "." + std::to_string(layers_.size()) + ".";
  for (Param<T>* p : layer->params()) p->name = prefix + p->name;
  layers_.push_back(std::move(layer));
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Mode mode) {
  if (layers_.empty()) return x;
  Tensor<T> h = layers_.front()->forward(x, mode);
  for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i]->forward(h, mode);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  if (layers_.empty()) return grad_out;
  Tensor<T> g = layers_.back()->backward(grad_out);
  for (std::size_t i = layers_.size() - 1; i-- > 0;) g = layers_[i]->backward(g);
  return g;
}

template <typename T>
Shape Sequential<T>::out_shape(Shape in) const {
  for (const auto& layer : layers_) in = anomap::nn::out_shape(layer->spec(), in);
  return in;
}

template <typename T>
std::vector<Param<T>*> Sequential<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& layer : layers_) {
    for (Param<T>* p : layer->params()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>*> Sequential<T>::buffers() {
  std::vector<Tensor<T>*> out;
  for (auto& layer : layers_) {
    for (Tensor<T>* b : layer->buffers()) out.push_back(b);
  }
  return out;
}

template <typename T>
void Sequential<T>::zero_grad() {
  for (Param<T>* p : params()) p->grad.fill(T(0));
}

template <typename T>
void Sequential<T>::clear_cache() {
  for (auto& layer : layers_) layer->clear_cache();
}

template <typename T>
void Sequential<T>::initialize(Rng& rng) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const bool sigmoid_next = i + 1 < layers_.size() &&
                              layers_[i + 1]->spec().kind == LayerKind::kSigmoid;
    layers_[i]->initialize(rng, sigmoid_next);
  }
}

template <typename T>
std::vector<LayerSpec> Sequential<T>::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& layer : layers_) out.push_back(layer->spec());
  return out;
}

template class Sequential<float>;
template class Sequential<double>;

}  // namespace anomap::nn
