#include "pathohr/numeric/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pathohr/error.hpp"

namespace pathohr {

namespace {

double checked(double v, const char* where) {
  if (!std::isfinite(v)) throw NumericError(std::string("grad_check: non-finite value at ") + where);
  return v;
}

}  // namespace

GradCheckReport grad_check_report(const DifferentiableFn& f, std::span<const double> params, double h) {
  std::vector<double> analytic(params.size(), 0.0);
  checked(f(params, &analytic), "base point");
  if (analytic.size() != params.size()) throw DimensionError("grad_check: gradient length mismatch");

  GradCheckReport report;
  std::vector<double> probe(params.begin(), params.end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = checked(f(probe, nullptr), "p + h");
    probe[i] = saved - h;
    const double down = checked(f(probe, nullptr), "p - h");
    probe[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), kGradCheckFloor});
    const double err = std::abs(analytic[i] - numeric) / scale;
    if (i == 0 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
  }
  return report;
}

double grad_check(const DifferentiableFn& f, std::span<const double> params, double h) {
  return grad_check_report(f, params, h).max_relative_error;
}

}  // namespace pathohr
