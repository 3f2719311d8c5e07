#pragma once

#include <span>
#include <vector>

#include "pathohr/numeric/matrix.hpp"

namespace pathohr {

/// Row-wise softmax with per-row max subtraction. Throws DimensionError on
/// an empty matrix.
Matrix softmax_rows(const Matrix& m);

/// Exact-erf GELU: x * Phi(x).
double gelu(double x);
/// d/dx of gelu: Phi(x) + x * phi(x).
double gelu_derivative(double x);

double sigmoid(double x);

inline constexpr double kLayerNormEps = 1e-5;

/// gain * (v - mean) / sqrt(var + eps) + bias with biased (1/n) variance.
std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gain,
                               std::span<const double> bias, double eps = kLayerNormEps);

/// x * weight + bias, where bias is broadcast over rows. weight is
/// (in x out); bias is 1 x out or empty for no bias.
Matrix linear_apply(const Matrix& x, const Matrix& weight, std::span<const double> bias);

}  // namespace pathohr
