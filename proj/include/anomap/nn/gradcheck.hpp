#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "anomap/nn/layers.hpp"

namespace anomap::nn {

struct GradCheckOptions {
  double step = 1e-5;       // central-difference h
  double tolerance = 1e-4;  // on the per-tensor relative error
  int max_coords_per_tensor = 24;  // 0 checks every coordinate
  std::uint64_t seed = 0;
  // ReLU, max-pool and |.| are only piecewise smooth. A coordinate whose
  // central differences at h and h/2 disagree has a kink inside the stencil;
  // it is skipped and another coordinate is drawn in its place.
  bool skip_kinks = true;
};

struct TensorCheck {
  std::string name;
  int coords_checked = 0;
  int coords_skipped = 0;  // kinks inside the stencil
  double max_abs_error = 0.0;
  double gradient_scale = 0.0;  // max |gradient| over the checked coordinates
  double relative_error = 0.0;  // max_abs_error / gradient_scale
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_relative_error = 0.0;
  int coords_checked = 0;
  int coords_skipped = 0;
  bool passed = true;
};

/// Compares analytic parameter gradients with central differences.
/// `loss` evaluates the objective; `loss_and_grad` evaluates it and leaves
/// fresh gradients in every Param::grad. Relative error per tensor is the
/// largest absolute discrepancy divided by the largest gradient magnitude
/// among the checked coordinates; a tensor whose gradients are all below
/// 1e-10 is judged on absolute error instead. The check fails if more
/// coordinates were skipped as kinks than were checked.
GradCheckReport grad_check(std::span<Param<double>* const> params,
                           const std::function<double()>& loss,
                           const std::function<double()>& loss_and_grad,
                           const GradCheckOptions& options = {});

}  // namespace anomap::nn
