#include "anomap/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "anomap/nn/gemm.hpp"

namespace anomap::nn {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kConvTransposed: return "conv_transposed";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kUpsample: return "upsample";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kReLU: return "relu";
    case LayerKind::kSigmoid: return "sigmoid";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
  for (auto k : {LayerKind::kConv, LayerKind::kConvTransposed, LayerKind::kMaxPool,
                 LayerKind::kUpsample, LayerKind::kBatchNorm, LayerKind::kReLU,
                 LayerKind::kSigmoid}) {
    if (to_string(k) == s) return k;
  }
  fail(ErrorKind::kFormat, "unknown layer kind '" + s + "'");
}

std::string to_string(Padding padding) {
  switch (padding) {
    case Padding::kValid: return "valid";
    case Padding::kSame: return "same";
    case Padding::kFull: return "full";
    case Padding::kExplicit: return "explicit";
  }
  return "?";
}

Padding parse_padding(const std::string& s) {
  for (auto p : {Padding::kValid, Padding::kSame, Padding::kFull, Padding::kExplicit}) {
    if (to_string(p) == s) return p;
  }
  fail(ErrorKind::kFormat, "unknown padding '" + s + "'");
}

std::pair<int, int> LayerSpec::resolved_padding() const {
  switch (padding) {
    case Padding::kValid: return {0, 0};
    case Padding::kSame:
      require(kernel_h % 2 == 1 && kernel_w % 2 == 1, ErrorKind::kInvalidArgument,
              "'same' padding needs an odd kernel");
      return {(kernel_h - 1) / 2, (kernel_w - 1) / 2};
    case Padding::kFull: return {kernel_h - 1, kernel_w - 1};
    case Padding::kExplicit: return {pad_h, pad_w};
  }
  return {0, 0};
}

LayerSpec LayerSpec::conv(int in, int out, int k, int stride, Padding p, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::kConv;
  s.kernel_h = s.kernel_w = k;
  s.stride_h = s.stride_w = stride;
  s.padding = p;
  s.in_channels = in;
  s.out_channels = out;
  s.bias = bias;
  return s;
}

LayerSpec LayerSpec::conv_explicit(int in, int out, int k, int stride, int pad, bool bias) {
  LayerSpec s = conv(in, out, k, stride, Padding::kExplicit, bias);
  s.pad_h = s.pad_w = pad;
  return s;
}

LayerSpec LayerSpec::conv_transposed(int in, int out, int k, int stride, int pad, int op_h,
                                     int op_w, bool bias) {
  LayerSpec s = conv_explicit(in, out, k, stride, pad, bias);
  s.kind = LayerKind::kConvTransposed;
  s.output_padding_h = op_h;
  s.output_padding_w = op_w;
  return s;
}

LayerSpec LayerSpec::maxpool(int factor) {
  LayerSpec s;
  s.kind = LayerKind::kMaxPool;
  s.factor = factor;
  return s;
}

LayerSpec LayerSpec::upsample(int factor) {
  LayerSpec s;
  s.kind = LayerKind::kUpsample;
  s.factor = factor;
  return s;
}

LayerSpec LayerSpec::batchnorm(int channels) {
  LayerSpec s;
  s.kind = LayerKind::kBatchNorm;
  s.in_channels = s.out_channels = channels;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::kReLU;
  return s;
}

LayerSpec LayerSpec::sigmoid() {
  LayerSpec s;
  s.kind = LayerKind::kSigmoid;
  return s;
}

Shape out_shape(const LayerSpec& layer, const Shape& in) {
  Shape out = in;
  const auto checked = [&](int v, const char* axis) {
    require(v > 0, ErrorKind::kShape,
            to_string(layer.kind) + ": non-positive output " + axis + " (" +
                std::to_string(v) + ") for input " + in.str());
    return v;
  };
  switch (layer.kind) {
    case LayerKind::kConv:
    case LayerKind::kConvTransposed: {
      require(layer.kernel_h >= 1 && layer.kernel_w >= 1 && layer.stride_h >= 1 &&
                  layer.stride_w >= 1,
              ErrorKind::kInvalidArgument, "kernel and stride must be >= 1");
      require(in.c == layer.in_channels, ErrorKind::kShape,
              to_string(layer.kind) + ": expected " + std::to_string(layer.in_channels) +
                  " input channels, got " + std::to_string(in.c));
      const auto [ph, pw] = layer.resolved_padding();
      out.c = layer.out_channels;
      if (layer.kind == LayerKind::kConv) {
        const int nh = in.h + 2 * ph - layer.kernel_h;
        const int nw = in.w + 2 * pw - layer.kernel_w;
        require(nh >= 0 && nw >= 0, ErrorKind::kShape,
                "conv: kernel larger than padded input " + in.str());
        out.h = checked(nh / layer.stride_h + 1, "height");
        out.w = checked(nw / layer.stride_w + 1, "width");
      } else {
        require(layer.output_padding_h >= 0 && layer.output_padding_h < layer.stride_h &&
                    layer.output_padding_w >= 0 && layer.output_padding_w < layer.stride_w,
                ErrorKind::kInvalidArgument, "output_padding must lie in [0, stride)");
        out.h = checked((in.h - 1) * layer.stride_h - 2 * ph + layer.kernel_h +
                            layer.output_padding_h,
                        "height");
        out.w = checked((in.w - 1) * layer.stride_w - 2 * pw + layer.kernel_w +
                            layer.output_padding_w,
                        "width");
      }
      return out;
    }
    case LayerKind::kMaxPool:
      require(layer.factor >= 1, ErrorKind::kInvalidArgument, "pool factor must be >= 1");
      out.h = checked(in.h / layer.factor, "height");
      out.w = checked(in.w / layer.factor, "width");
      return out;
    case LayerKind::kUpsample:
      require(layer.factor >= 1, ErrorKind::kInvalidArgument, "upsample factor must be >= 1");
      out.h = in.h * layer.factor;
      out.w = in.w * layer.factor;
      return out;
    case LayerKind::kBatchNorm:
      require(in.c == layer.in_channels, ErrorKind::kShape,
              "batchnorm: expected " + std::to_string(layer.in_channels) +
                  " channels, got " + std::to_string(in.c));
      return out;
    case LayerKind::kReLU:
    case LayerKind::kSigmoid: return out;
  }
  return out;
}

template <typename T>
void Layer<T>::check_cache(bool present, const Shape& grad_shape, const Shape& expected) const {
  require(present, ErrorKind::kState,
          to_string(spec_.kind) + ": backward without a train-mode forward cache");
  require(grad_shape == expected, ErrorKind::kShape,
          to_string(spec_.kind) + ": upstream gradient " + grad_shape.str() +
              " does not match cached output " + expected.str());
}

namespace {

// Patch matrix of one image: rows (c, ky, kx), columns (oy, ox).
struct Geometry {
  int channels, height, width;
  int kh, kw, sh, sw, ph, pw;
  int oh, ow;
  int rows() const { return channels * kh * kw; }
  int cols() const { return oh * ow; }
};

template <typename T>
void im2col(const Geometry& g, const T* img, T* col) {
  const int plane = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        T* row = col + static_cast<long>((c * g.kh + ky) * g.kw + kx) * plane;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.sh - g.ph + ky;
          T* out = row + oy * g.ow;
          if (iy < 0 || iy >= g.height) {
            std::fill(out, out + g.ow, T(0));
            continue;
          }
          const T* src = img + (static_cast<long>(c) * g.height + iy) * g.width;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.sw - g.pw + kx;
            out[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const Geometry& g, const T* col, T* img) {
  const int plane = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        const T* row = col + static_cast<long>((c * g.kh + ky) * g.kw + kx) * plane;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.sh - g.ph + ky;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = img + (static_cast<long>(c) * g.height + iy) * g.width;
          const T* src = row + oy * g.ow;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.sw - g.pw + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void init_weights(Tensor<T>& w, Rng& rng, int fan_in, int fan_out, bool sigmoid_output) {
  if (sigmoid_output) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-limit, limit));
  } else {
    const double stddev = std::sqrt(2.0 / fan_in);
    for (auto& v : w.values()) v = static_cast<T>(rng.normal(0.0, stddev));
  }
}

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  explicit Conv2d(const LayerSpec& spec) : Layer<T>(spec) {
    const Shape ws{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
    weight_ = {"weight", Tensor<T>(ws), Tensor<T>(ws)};
    if (spec.bias) {
      const Shape bs{1, spec.out_channels, 1, 1};
      bias_ = {"bias", Tensor<T>(bs), Tensor<T>(bs)};
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    const Shape os = out_shape(this->spec_, x.shape());
    const Geometry g = geometry(x.shape(), os);
    Tensor<T> y(os);
    std::vector<T> col(static_cast<std::size_t>(g.rows()) * g.cols());
    for (int n = 0; n < os.n; ++n) {
      im2col(g, x.item(n).data(), col.data());
      T* out = y.item(n).data();
      gemm(os.c, g.cols(), g.rows(), weight_.value.data(), col.data(), out, false);
      if (this->spec_.bias) {
        for (int c = 0; c < os.c; ++c) {
          const T b = bias_.value[c];
          T* plane = out + static_cast<long>(c) * g.cols();
          for (int i = 0; i < g.cols(); ++i) plane[i] += b;
        }
      }
    }
    if (mode == Mode::kTrain) {
      input_ = x;
      out_shape_ = os;
      cached_ = true;
    } else {
      clear_cache();
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    this->check_cache(cached_, gy.shape(), out_shape_);
    const Geometry g = geometry(input_.shape(), out_shape_);
    Tensor<T> dx(input_.shape());
    const int rows = g.rows();
    const int cols = g.cols();
    const int cout = out_shape_.c;
    std::vector<T> wt(static_cast<std::size_t>(rows) * cout);
    transpose(cout, rows, weight_.value.data(), wt.data());
    std::vector<T> col(static_cast<std::size_t>(rows) * cols);
    std::vector<T> col_t(col.size());
    for (int n = 0; n < out_shape_.n; ++n) {
      const T* g_n = gy.item(n).data();
      gemm(rows, cols, cout, wt.data(), g_n, col.data(), false);
      col2im(g, col.data(), dx.item(n).data());
      im2col(g, input_.item(n).data(), col.data());
      transpose(rows, cols, col.data(), col_t.data());
      gemm(cout, rows, cols, g_n, col_t.data(), weight_.grad.data(), true);
      if (this->spec_.bias) {
        for (int c = 0; c < cout; ++c) {
          T s = 0;
          for (int i = 0; i < cols; ++i) s += g_n[static_cast<long>(c) * cols + i];
          bias_.grad[c] += s;
        }
      }
    }
    return dx;
  }

  std::vector<Param<T>*> params() override {
    if (this->spec_.bias) return {&weight_, &bias_};
    return {&weight_};
  }

  void clear_cache() override {
    input_ = Tensor<T>();
    cached_ = false;
  }

  void initialize(Rng& rng, bool sigmoid_output) override {
    const int k = this->spec_.kernel_h * this->spec_.kernel_w;
    init_weights(weight_.value, rng, this->spec_.in_channels * k,
                 this->spec_.out_channels * k, sigmoid_output);
    if (this->spec_.bias) bias_.value.fill(T(0));
  }

 private:
  Geometry geometry(const Shape& in, const Shape& out) const {
    const auto [ph, pw] = this->spec_.resolved_padding();
    return {in.c, in.h, in.w, this->spec_.kernel_h, this->spec_.kernel_w,
            this->spec_.stride_h, this->spec_.stride_w, ph, pw, out.h, out.w};
  }

  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> input_;
  Shape out_shape_{};
  bool cached_ = false;
};

// Adjoint of Conv2d: weight layout (in, out, kh, kw).
template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  explicit ConvTranspose2d(const LayerSpec& spec) : Layer<T>(spec) {
    const Shape ws{spec.in_channels, spec.out_channels, spec.kernel_h, spec.kernel_w};
    weight_ = {"weight", Tensor<T>(ws), Tensor<T>(ws)};
    if (spec.bias) {
      const Shape bs{1, spec.out_channels, 1, 1};
      bias_ = {"bias", Tensor<T>(bs), Tensor<T>(bs)};
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    const Shape os = out_shape(this->spec_, x.shape());
    const Geometry g = geometry(x.shape(), os);
    const int cin = x.shape().c;
    const int in_plane = x.shape().h * x.shape().w;
    Tensor<T> y(os);
    // col = W^T x, computed as (x^T W)^T so the wide operand stays on the right
    std::vector<T> xt(static_cast<std::size_t>(in_plane) * cin);
    std::vector<T> col_t(static_cast<std::size_t>(g.rows()) * g.cols());
    std::vector<T> col(col_t.size());
    for (int n = 0; n < os.n; ++n) {
      transpose(cin, in_plane, x.item(n).data(), xt.data());
      gemm(in_plane, g.rows(), cin, xt.data(), weight_.value.data(), col_t.data(), false);
      transpose(in_plane, g.rows(), col_t.data(), col.data());
      T* out = y.item(n).data();
      col2im(g, col.data(), out);
      if (this->spec_.bias) {
        const long plane = static_cast<long>(os.h) * os.w;
        for (int c = 0; c < os.c; ++c) {
          const T b = bias_.value[c];
          for (long i = 0; i < plane; ++i) out[c * plane + i] += b;
        }
      }
    }
    if (mode == Mode::kTrain) {
      input_ = x;
      out_shape_ = os;
      cached_ = true;
    } else {
      clear_cache();
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    this->check_cache(cached_, gy.shape(), out_shape_);
    const Geometry g = geometry(input_.shape(), out_shape_);
    const int cin = input_.shape().c;
    Tensor<T> dx(input_.shape());
    std::vector<T> col(static_cast<std::size_t>(g.rows()) * g.cols());
    std::vector<T> col_t(col.size());
    const long plane = static_cast<long>(out_shape_.h) * out_shape_.w;
    for (int n = 0; n < out_shape_.n; ++n) {
      const T* g_n = gy.item(n).data();
      im2col(g, g_n, col.data());
      gemm(cin, g.cols(), g.rows(), weight_.value.data(), col.data(), dx.item(n).data(), false);
      transpose(g.rows(), g.cols(), col.data(), col_t.data());
      gemm(cin, g.rows(), g.cols(), input_.item(n).data(), col_t.data(), weight_.grad.data(),
           true);
      if (this->spec_.bias) {
        for (int c = 0; c < out_shape_.c; ++c) {
          T s = 0;
          for (long i = 0; i < plane; ++i) s += g_n[c * plane + i];
          bias_.grad[c] += s;
        }
      }
    }
    return dx;
  }

  std::vector<Param<T>*> params() override {
    if (this->spec_.bias) return {&weight_, &bias_};
    return {&weight_};
  }

  void clear_cache() override {
    input_ = Tensor<T>();
    cached_ = false;
  }

  void initialize(Rng& rng, bool sigmoid_output) override {
    const int k = this->spec_.kernel_h * this->spec_.kernel_w;
    init_weights(weight_.value, rng, this->spec_.in_channels * k,
                 this->spec_.out_channels * k, sigmoid_output);
    if (this->spec_.bias) bias_.value.fill(T(0));
  }

 private:
  // The output image plays the role of the convolution input.
  Geometry geometry(const Shape& in, const Shape& out) const {
    const auto [ph, pw] = this->spec_.resolved_padding();
    return {out.c, out.h, out.w, this->spec_.kernel_h, this->spec_.kernel_w,
            this->spec_.stride_h, this->spec_.stride_w, ph, pw, in.h, in.w};
  }

  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> input_;
  Shape out_shape_{};
  bool cached_ = false;
};

template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    const Shape is = x.shape();
    const Shape os = out_shape(this->spec_, is);
    const int f = this->spec_.factor;
    Tensor<T> y(os);
    std::vector<std::size_t> argmax(mode == Mode::kTrain ? os.size() : 0);
    std::size_t o = 0;
    for (int n = 0; n < os.n; ++n) {
      for (int c = 0; c < os.c; ++c) {
        for (int oy = 0; oy < os.h; ++oy) {
          for (int ox = 0; ox < os.w; ++ox, ++o) {
            std::size_t best = x.index(n, c, oy * f, ox * f);
            for (int dy = 0; dy < f; ++dy) {
              for (int dx = 0; dx < f; ++dx) {
                const std::size_t i = x.index(n, c, oy * f + dy, ox * f + dx);
                if (x[i] > x[best]) best = i;
              }
            }
            y[o] = x[best];
            if (!argmax.empty()) argmax[o] = best;
          }
        }
      }
    }
    if (mode == Mode::kTrain) {
      argmax_ = std::move(argmax);
      in_shape_ = is;
      out_shape_ = os;
      cached_ = true;
    } else {
      clear_cache();
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    this->check_cache(cached_, gy.shape(), out_shape_);
    Tensor<T> dx(in_shape_);
    for (std::size_t o = 0; o < gy.size(); ++o) dx[argmax_[o]] += gy[o];
    return dx;
  }

  void clear_cache() override {
    argmax_.clear();
    cached_ = false;
  }

 private:
  std::vector<std::size_t> argmax_;
  Shape in_shape_{};
  Shape out_shape_{};
  bool cached_ = false;
};

template <typename T>
class Upsample2d final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    const Shape os = out_shape(this->spec_, x.shape());
    const int f = this->spec_.factor;
    Tensor<T> y(os);
    for (int n = 0; n < os.n; ++n) {
      for (int c = 0; c < os.c; ++c) {
        for (int oy = 0; oy < os.h; ++oy) {
          for (int ox = 0; ox < os.w; ++ox) y.at(n, c, oy, ox) = x.at(n, c, oy / f, ox / f);
        }
      }
    }
    if (mode == Mode::kTrain) {
      in_shape_ = x.shape();
      out_shape_ = os;
      cached_ = true;
    } else {
      clear_cache();
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    this->check_cache(cached_, gy.shape(), out_shape_);
    const int f = this->spec_.factor;
    Tensor<T> dx(in_shape_);
    for (int n = 0; n < out_shape_.n; ++n) {
      for (int c = 0; c < out_shape_.c; ++c) {
        for (int oy = 0; oy < out_shape_.h; ++oy) {
          for (int ox = 0; ox < out_shape_.w; ++ox) {
            dx.at(n, c, oy / f, ox / f) += gy.at(n, c, oy, ox);
          }
        }
      }
    }
    return dx;
  }

  void clear_cache() override { cached_ = false; }

 private:
  Shape in_shape_{};
  Shape out_shape_{};
  bool cached_ = false;
};

template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  explicit BatchNorm2d(const LayerSpec& spec) : Layer<T>(spec) {
    const Shape s{1, spec.in_channels, 1, 1};
    gamma_ = {"gamma", Tensor<T>(s, T(1)), Tensor<T>(s)};
    beta_ = {"beta", Tensor<T>(s), Tensor<T>(s)};
    running_mean_ = Tensor<T>(s);
    running_var_ = Tensor<T>(s, T(1));
    tracked_ = Tensor<T>(Shape{1, 1, 1, 1});
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    const Shape s = out_shape(this->spec_, x.shape());
    const long plane = static_cast<long>(s.h) * s.w;
    const long count = plane * s.n;
    Tensor<T> y(s);
    if (mode == Mode::kInfer) {
      require(tracked_[0] > T(0), ErrorKind::kState,
              "batchnorm: inference before any training step (no running statistics)");
      for (int c = 0; c < s.c; ++c) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + kBatchNormEps);
        const T scale = static_cast<T>(gamma_.value[c] * inv);
        const T shift = static_cast<T>(beta_.value[c] - running_mean_[c] * gamma_.value[c] * inv);
        for (int n = 0; n < s.n; ++n) {
          const T* src = x.data() + x.index(n, c, 0, 0);
          T* dst = y.data() + y.index(n, c, 0, 0);
          for (long i = 0; i < plane; ++i) dst[i] = src[i] * scale + shift;
        }
      }
      clear_cache();
      return y;
    }
    xhat_ = Tensor<T>(s);
    inv_std_.assign(s.c, T(0));
    for (int c = 0; c < s.c; ++c) {
      double sum = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const T* src = x.data() + x.index(n, c, 0, 0);
        for (long i = 0; i < plane; ++i) sum += src[i];
      }
      const double mean = sum / count;
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const T* src = x.data() + x.index(n, c, 0, 0);
        for (long i = 0; i < plane; ++i) sq += (src[i] - mean) * (src[i] - mean);
      }
      const double var = sq / count;
      const double inv = 1.0 / std::sqrt(var + kBatchNormEps);
      inv_std_[c] = static_cast<T>(inv);
      for (int n = 0; n < s.n; ++n) {
        const T* src = x.data() + x.index(n, c, 0, 0);
        T* xh = xhat_.data() + xhat_.index(n, c, 0, 0);
        T* dst = y.data() + y.index(n, c, 0, 0);
        for (long i = 0; i < plane; ++i) {
          xh[i] = static_cast<T>((src[i] - mean) * inv);
          dst[i] = gamma_.value[c] * xh[i] + beta_.value[c];
        }
      }
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      running_mean_[c] = static_cast<T>((1.0 - kBatchNormMomentum) * running_mean_[c] +
                                        kBatchNormMomentum * mean);
      running_var_[c] = static_cast<T>((1.0 - kBatchNormMomentum) * running_var_[c] +
                                       kBatchNormMomentum * unbiased);
    }
    tracked_[0] += T(1);
    out_shape_ = s;
    cached_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    this->check_cache(cached_, gy.shape(), out_shape_);
    const Shape s = out_shape_;
    const long plane = static_cast<long>(s.h) * s.w;
    const double count = static_cast<double>(plane) * s.n;
    Tensor<T> dx(s);
    for (int c = 0; c < s.c; ++c) {
      double sum_g = 0.0;
      double sum_gx = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const T* g = gy.data() + gy.index(n, c, 0, 0);
        const T* xh = xhat_.data() + xhat_.index(n, c, 0, 0);
        for (long i = 0; i < plane; ++i) {
          sum_g += g[i];
          sum_gx += g[i] * xh[i];
        }
      }
      gamma_.grad[c] += static_cast<T>(sum_gx);
      beta_.grad[c] += static_cast<T>(sum_g);
      const double k = gamma_.value[c] * inv_std_[c] / count;
      for (int n = 0; n < s.n; ++n) {
        const T* g = gy.data() + gy.index(n, c, 0, 0);
        const T* xh = xhat_.data() + xhat_.index(n, c, 0, 0);
        T* d = dx.data() + dx.index(n, c, 0, 0);
        for (long i = 0; i < plane; ++i) {
          d[i] = static_cast<T>(k * (count * g[i] - sum_g - xh[i] * sum_gx));
        }
      }
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&gamma_, &beta_}; }
  std::vector<Tensor<T>*> buffers() override {
    return {&running_mean_, &running_var_, &tracked_};
  }

  void clear_cache() override {
    xhat_ = Tensor<T>();
    cached_ = false;
  }

 private:
  Param<T> gamma_;
  Param<T> beta_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
  Tensor<T> tracked_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
  Shape out_shape_{};
  bool cached_ = false;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    if (mode == Mode::kTrain) {
      output_ = y;
      cached_ = true;
    } else {
      clear_cache();
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    this->check_cache(cached_, gy.shape(), output_.shape());
    Tensor<T> dx(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i) dx[i] = output_[i] > T(0) ? gy[i] : T(0);
    return dx;
  }

  void clear_cache() override {
    output_ = Tensor<T>();
    cached_ = false;
  }

 private:
  Tensor<T> output_;
  bool cached_ = false;
};

template <typename T>
class Sigmoid final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
    if (mode == Mode::kTrain) {
      output_ = y;
      cached_ = true;
    } else {
      clear_cache();
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    this->check_cache(cached_, gy.shape(), output_.shape());
    Tensor<T> dx(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i) {
      dx[i] = gy[i] * output_[i] * (T(1) - output_[i]);
    }
    return dx;
  }

  void clear_cache() override {
    output_ = Tensor<T>();
    cached_ = false;
  }

 private:
  Tensor<T> output_;
  bool cached_ = false;
};

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::kConv: return std::make_unique<Conv2d<T>>(spec);
    case LayerKind::kConvTransposed: return std::make_unique<ConvTranspose2d<T>>(spec);
    case LayerKind::kMaxPool: return std::make_unique<MaxPool2d<T>>(spec);
    case LayerKind::kUpsample: return std::make_unique<Upsample2d<T>>(spec);
    case LayerKind::kBatchNorm: return std::make_unique<BatchNorm2d<T>>(spec);
    case LayerKind::kReLU: return std::make_unique<ReLU<T>>(spec);
    case LayerKind::kSigmoid: return std::make_unique<Sigmoid<T>>(spec);
  }
  fail(ErrorKind::kInvalidArgument, "unknown layer kind");
}

template class Layer<float>;
template class Layer<double>;
template std::unique_ptr<Layer<float>> make_layer<float>(const LayerSpec&);
template std::unique_ptr<Layer<double>> make_layer<double>(const LayerSpec&);

}  // namespace anomap::nn
