#pragma once

#include <memory>
#include <string>
#include <vector>

#include "anomap/nn/layers.hpp"

namespace anomap::nn {

/// Ordered stack of layers. Parameter names are "<name>.<index>.<param>".
template <typename T>
class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(std::string name) : name_(std::move(name)) {}

  void add(const LayerSpec& spec);

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out);
  Shape out_shape(Shape in) const;

  std::vector<Param<T>*> params();
  std::vector<Tensor<T>*> buffers();
  void zero_grad();
  void clear_cache();

  /// Seeded init; a conv feeding a sigmoid gets fan-average uniform scaling.
  void initialize(Rng& rng);

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }
  std::vector<LayerSpec> specs() const;
  const std::string& name() const { return name_; }

 private:
  std::string name_ = "net";
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Copies parameter values and buffers between two stacks of identical
/// architecture, converting the scalar type.
template <typename Dst, typename Src>
void copy_state(Sequential<Src>& src, Sequential<Dst>& dst) {
  auto sp = src.params();
  auto dp = dst.params();
  require(sp.size() == dp.size(), ErrorKind::kShape, "copy_state: parameter count mismatch");
  for (std::size_t i = 0; i < sp.size(); ++i) {
    require(sp[i]->value.shape() == dp[i]->value.shape(), ErrorKind::kShape,
            "copy_state: shape mismatch for " + sp[i]->name);
    std::copy(sp[i]->value.values().begin(), sp[i]->value.values().end(),
              dp[i]->value.values().begin());
  }
  auto sb = src.buffers();
  auto db = dst.buffers();
  require(sb.size() == db.size(), ErrorKind::kShape, "copy_state: buffer count mismatch");
  for (std::size_t i = 0; i < sb.size(); ++i) {
    std::copy(sb[i]->values().begin(), sb[i]->values().end(), db[i]->values().begin());
  }
}

}  // namespace anomap::nn
