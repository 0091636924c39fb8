#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "anomap/nn/layers.hpp"

namespace anomap::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moments are created lazily on the first step, shaped like the parameters.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

/// Bias-corrected Adam update of `params` from their accumulated gradients.
/// Throws kNumeric on a non-finite gradient before touching any parameter.
template <typename T>
void adam_step(std::span<Param<T>* const> params, AdamState<T>& state);

}  // namespace anomap::nn
