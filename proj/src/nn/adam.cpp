#include "anomap/nn/adam.hpp"

#include <cmath>

namespace anomap::nn {

template <typename T>
void adam_step(std::span<Param<T>* const> params, AdamState<T>& state) {
  if (state.first_moment.empty()) {
    for (const Param<T>* p : params) {
      state.first_moment.emplace_back(p->value.size(), T(0));
      state.second_moment.emplace_back(p->value.size(), T(0));
    }
  }
  require(state.first_moment.size() == params.size(), ErrorKind::kShape,
          "adam: optimizer state tracks " + std::to_string(state.first_moment.size()) +
              " tensors, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Param<T>& p = *params[i];
    require(p.grad.size() == p.value.size() && state.first_moment[i].size() == p.value.size(),
            ErrorKind::kShape, "adam: shape mismatch for " + p.name);
    require(p.grad.all_finite(), ErrorKind::kNumeric, "adam: non-finite gradient in " + p.name);
  }

  ++state.step;
  const AdamConfig& cfg = state.config;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(cfg.learning_rate / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(cfg.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = *params[i];
    T* m = state.first_moment[i].data();
    T* v = state.second_moment[i].data();
    T* w = p.value.data();
    const T* g = p.grad.data();
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      w[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_c2 + eps);
    }
  }
}

template void adam_step<float>(std::span<Param<float>* const>, AdamState<float>&);
template void adam_step<double>(std::span<Param<double>* const>, AdamState<double>&);

}  // namespace anomap::nn
