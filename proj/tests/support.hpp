#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "anomap/nn/tensor.hpp"
#include "anomap/rng.hpp"

namespace testing {

using anomap::Rng;
using anomap::nn::Shape;
using anomap::nn::Tensor;

template <typename T>
Tensor<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Largest |analytic - numeric| over max |gradient|, central differences on
// every coordinate of `x`.
inline double input_grad_error(Tensor<double>& x, const std::function<double()>& loss,
                               const Tensor<double>& analytic, double h = 1e-4) {
  double err = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = loss();
    x[i] = saved - h;
    const double down = loss();
    x[i] = saved;
    const double numeric = (up - down) / (2 * h);
    err = std::max(err, std::abs(numeric - analytic[i]));
    scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
  }
  return scale > 1e-10 ? err / scale : err;
}

}  // namespace testing
