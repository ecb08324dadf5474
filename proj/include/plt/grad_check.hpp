#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "plt/errors.hpp"
#include "plt/tensor.hpp"

namespace plt {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t coordinates = 0;
  /// Coordinates whose gradient magnitude fell under the relative floor and
  /// were judged by absolute error instead.
  std::size_t abs_fallback_count = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  bool passed = false;
};

/// Floor below which relative error is meaningless.
inline constexpr double kGradMagnitudeFloor = 1e-8;

/// |a - n| / max(|a|, |n|, floor)
inline double gradient_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kGradMagnitudeFloor});
}

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences over every coordinate of `params`. `f` must rebuild its graph
/// from the current parameter values on each call. order 4 uses the five-point
/// stencil, whose smaller truncation error allows a larger step. A nonzero
/// max_coordinates checks an evenly strided subset of about that size.
inline GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                  double h = 1e-5, double tol = 1e-6, int order = 2,
                                  std::size_t max_coordinates = 0) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw ConfigError("grad_check: step must lie in [1e-6, 1e-3]");
  if (order != 2 && order != 4) throw ConfigError("grad_check: order must be 2 or 4");
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  const Tensor out = f();
  if (!all_finite(out)) throw NumericError("grad_check: function value is not finite");
  out.backward();

  auto eval = [&f] {
    NoGradGuard guard;
    const double v = f().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
    return v;
  };

  std::size_t total = 0;
  for (const auto& p : params) total += p.size();
  const std::size_t stride =
      max_coordinates == 0 ? 1 : std::max<std::size_t>(1, (total + max_coordinates - 1) / max_coordinates);

  GradCheckReport report;
  report.passed = true;
  std::size_t flat = 0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = params[t];
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (flat++ % stride != 0) continue;
      const double analytic = p.has_grad() ? p.grad()[i] : 0.0;
      const double saved = values[i];
      auto at = [&](double offset) {
        values[i] = saved + offset;
        return eval();
      };
      const double d1 = at(h) - at(-h);
      double numeric = d1 / (2.0 * h);
      if (order == 4) numeric = (8.0 * d1 - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      values[i] = saved;

      const double abs_err = std::abs(analytic - numeric);
      const bool tiny = std::max(std::abs(analytic), std::abs(numeric)) < kGradMagnitudeFloor;
      const double rel_err = gradient_rel_error(analytic, numeric);
      ++report.coordinates;
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      if (tiny) {
        ++report.abs_fallback_count;
        if (!(abs_err < tol)) report.passed = false;
        continue;
      }
      if (rel_err > report.max_rel_err) {
        report.max_rel_err = rel_err;
        report.worst_tensor = t;
        report.worst_index = i;
      }
      if (!(rel_err < tol)) report.passed = false;
    }
  }
  return report;
}

}  // namespace plt
