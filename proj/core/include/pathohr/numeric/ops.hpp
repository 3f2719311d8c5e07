#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pathohr/numeric/tape.hpp"

// Differentiable primitives over Tape variables. Every function records its
// output on the tape of its first argument; all arguments must share a tape.
namespace pathohr::ad {

Var matmul(Var a, Var b);
/// a * b^T.
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
/// Adds a 1 x c row to every row of a.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
/// s is a 1 x 1 variable.
Var scale_by(Var a, Var s);

/// x * weight + bias (bias is 1 x out).
Var linear(Var x, Var weight, Var bias);

Var softmax_rows(Var a);
/// Softmax restricted to entries where mask != 0; masked entries get weight
/// 0. A row with no unmasked entry becomes uniform and passes no gradient.
Var masked_softmax_rows(Var a, const Matrix& mask);
/// Divides each row by its sum. A row whose sum is not positive becomes
/// uniform and passes no gradient.
Var normalize_row_sums(Var a);
/// Multiplies by a constant 0/1 mask.
Var apply_mask(Var a, const Matrix& mask);

Var layer_norm_rows(Var x, Var gain, Var bias, double eps);

Var gelu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);

/// Rows scaled to unit L2 norm; rows with norm < eps become zero.
Var normalize_rows(Var a, double eps);
/// out(i, j) = ||q_i - k_j||_2.
Var pairwise_distance(Var q, Var k);

Var concat_rows(Var a, Var b);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);

/// One source row with its interpolation weight.
struct WeightedIndex {
  std::size_t row;
  double weight;
};
/// out row t = sum over taps of weight * table row.
Var gather_weighted(Var table, const std::vector<std::vector<WeightedIndex>>& taps);

/// 1 x 1 sum of all entries.
Var sum(Var a);
/// 1 x 1 mean of squared differences against a constant target.
Var mse(Var pred, const Matrix& target);

}  // namespace pathohr::ad
