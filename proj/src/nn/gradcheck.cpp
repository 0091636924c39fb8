#include "anomap/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "anomap/rng.hpp"

namespace anomap::nn {

GradCheckReport grad_check(std::span<Param<double>* const> params,
                           const std::function<double()>& loss,
                           const std::function<double()>& loss_and_grad,
                           const GradCheckOptions& options) {
  loss_and_grad();
  std::vector<std::vector<double>> analytic;
  for (const Param<double>* p : params) {
    analytic.emplace_back(p->grad.values().begin(), p->grad.values().end());
  }

  Rng rng(options.seed);
  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Param<double>& p = *params[t];
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), 0);
    std::size_t wanted = coords.size();
    if (options.max_coords_per_tensor > 0 &&
        coords.size() > static_cast<std::size_t>(options.max_coords_per_tensor)) {
      rng.shuffle(coords.begin(), coords.end());
      wanted = static_cast<std::size_t>(options.max_coords_per_tensor);
    }
    auto central = [&](std::size_t i, double h) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = loss();
      p.value[i] = saved - h;
      const double down = loss();
      p.value[i] = saved;
      return (up - down) / (2.0 * h);
    };
    TensorCheck check;
    check.name = p.name;
    for (std::size_t i : coords) {
      if (static_cast<std::size_t>(check.coords_checked) == wanted ||
          static_cast<std::size_t>(check.coords_skipped) >= 2 * wanted) {
        break;
      }
      const double numeric = central(i, options.step);
      if (options.skip_kinks) {
        const double half = central(i, 0.5 * options.step);
        const double spread = std::abs(numeric - half);
        if (spread > 0.1 * options.tolerance * std::max(std::abs(numeric), std::abs(half)) +
                         1e-12) {
          ++check.coords_skipped;
          continue;
        }
      }
      const double a = analytic[t][i];
      check.max_abs_error = std::max(check.max_abs_error, std::abs(a - numeric));
      check.gradient_scale = std::max({check.gradient_scale, std::abs(a), std::abs(numeric)});
      ++check.coords_checked;
    }
    check.relative_error = check.gradient_scale > 1e-10
                               ? check.max_abs_error / check.gradient_scale
                               : check.max_abs_error;
    report.max_relative_error = std::max(report.max_relative_error, check.relative_error);
    report.coords_checked += check.coords_checked;
    report.coords_skipped += check.coords_skipped;
    report.tensors.push_back(std::move(check));
  }
  report.passed = report.max_relative_error <= options.tolerance &&
                  report.coords_skipped <= report.coords_checked;
  return report;
}

}  // namespace anomap::nn
