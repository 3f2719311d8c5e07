#include "pathohr/numeric/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pathohr/error.hpp"

namespace pathohr {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
}

Matrix softmax_rows(const Matrix& m) {
  if (m.empty()) throw DimensionError("softmax_rows: empty matrix");
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto in = m.row(r);
    auto dst = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp(in[c] - mx);
      total += dst[c];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

double gelu(double x) {
  return 0.5 * x * std::erfc(-x * kInvSqrt2);
}

double gelu_derivative(double x) {
  const double cdf = 0.5 * std::erfc(-x * kInvSqrt2);
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi * kInvSqrt2;
  return cdf + x * pdf;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gain,
                               std::span<const double> bias, double eps) {
  if (v.size() != gain.size() || v.size() != bias.size()) {
    throw DimensionError("layer_norm: lengths " + std::to_string(v.size()) + ", " +
                         std::to_string(gain.size()) + ", " + std::to_string(bias.size()));
  }
  if (v.empty()) throw DimensionError("layer_norm: empty vector");
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = gain[i] * (v[i] - mean) * inv + bias[i];
  return out;
}

Matrix linear_apply(const Matrix& x, const Matrix& weight, std::span<const double> bias) {
  Matrix out = matmul(x, weight);
  if (!bias.empty()) {
    if (bias.size() != out.cols()) {
      throw DimensionError("linear_apply: bias length " + std::to_string(bias.size()) +
                           " vs output width " + std::to_string(out.cols()));
    }
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
    }
  }
  return out;
}

}  // namespace pathohr
