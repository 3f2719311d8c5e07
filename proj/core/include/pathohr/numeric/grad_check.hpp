#pragma once

#include <functional>
#include <span>
#include <vector>

namespace pathohr {

/// A scalar function evaluated at `params`. When `grad` is non-null the
/// function also writes its analytic gradient (same length as params).
using DifferentiableFn = std::function<double(std::span<const double> params, std::vector<double>* grad)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Denominator floor of the per-coordinate error. With h = 1e-4 a double
/// central difference carries roughly 1e-10 of absolute round-off and
/// truncation error, so agreement to 1e-4 cannot be resolved for gradient
/// entries much below this.
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares the analytic gradient with central differences
/// (f(p + h) - f(p - h)) / 2h coordinate by coordinate. The per-coordinate
/// error is |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor).
/// Throws NumericError if f returns a non-finite value.
GradCheckReport grad_check_report(const DifferentiableFn& f, std::span<const double> params, double h = 1e-4);

/// Maximum relative error from grad_check_report.
double grad_check(const DifferentiableFn& f, std::span<const double> params, double h = 1e-4);

}  // namespace pathohr
