#pragma once

#include <memory>
#include <string>
#include <vector>

#include "anomap/nn/tensor.hpp"
#include "anomap/rng.hpp"

namespace anomap::nn {

enum class Mode { kTrain, kInfer };

enum class LayerKind { kConv, kConvTransposed, kMaxPool, kUpsample, kBatchNorm, kReLU, kSigmoid };

enum class Padding { kValid, kSame, kFull, kExplicit };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& s);
std::string to_string(Padding padding);
Padding parse_padding(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::kReLU;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  Padding padding = Padding::kValid;
  int pad_h = 0;  // only read for Padding::kExplicit
  int pad_w = 0;
  int in_channels = 0;
  int out_channels = 0;
  int output_padding_h = 0;  // conv_transposed only
  int output_padding_w = 0;
  int factor = 2;  // maxpool / upsample
  bool bias = true;

  /// Effective (pad_h, pad_w) after resolving valid/same/full.
  std::pair<int, int> resolved_padding() const;

  static LayerSpec conv(int in, int out, int k, int stride, Padding p, bool bias = true);
  static LayerSpec conv_explicit(int in, int out, int k, int stride, int pad, bool bias = true);
  static LayerSpec conv_transposed(int in, int out, int k, int stride, int pad, int op_h,
                                   int op_w, bool bias = true);
  static LayerSpec maxpool(int factor = 2);
  static LayerSpec upsample(int factor = 2);
  static LayerSpec batchnorm(int channels);
  static LayerSpec relu();
  static LayerSpec sigmoid();
};

/// Output extents of `layer` for input `in`. Throws kShape on a
/// non-positive result or a channel mismatch.
Shape out_shape(const LayerSpec& layer, const Shape& in);

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;

/// A layer owns its parameters and the activation cache of the most recent
/// train-mode forward. backward() consumes that cache and accumulates into
/// the parameter gradients.
template <typename T>
class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(spec) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const LayerSpec& spec() const { return spec_; }
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  /// Non-trainable state that still belongs in a checkpoint.
  virtual std::vector<Tensor<T>*> buffers() { return {}; }
  virtual void clear_cache() = 0;

  /// Seeded initialization of trainable parameters. `sigmoid_output` selects
  /// fan-average uniform scaling instead of fan-in normal.
  virtual void initialize(Rng& /*rng*/, bool /*sigmoid_output*/) {}

 protected:
  void check_cache(bool present, const Shape& grad_shape, const Shape& expected) const;

  LayerSpec spec_;
};

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec);

}  // namespace anomap::nn
