#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "pathohr/numeric/matrix.hpp"
#include "pathohr/numeric/ops.hpp"
#include "pathohr/numeric/rng.hpp"
#include "pathohr/tokens.hpp"

namespace pathohr {

enum class FuzzMode { train, inference };

/// Learnable embedding table over a grid_rows x grid_cols lattice. Row
/// (i * grid_cols + j) of `table` is P(i, j).
struct PositionalEncoding {
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  Matrix table;
  FuzzMode mode = FuzzMode::inference;

  std::size_t dim() const { return table.cols(); }
  const std::span<const double> at(std::size_t i, std::size_t j) const { return table.row(i * grid_cols + j); }
};

/// Fractional lookup coordinate actually used for one token.
struct FuzzyCoord {
  double row = 0.0;
  double col = 0.0;
};

/// Bilinear taps for each position. In train mode each coordinate is offset
/// by fresh s1, s2 ~ U(-0.5, 0.5) (row offset drawn first) and clamped to the
/// table; in inference mode the lookup is exact. Throws IndexError when a
/// position lies outside the table.
std::vector<std::vector<ad::WeightedIndex>> fuzzy_taps(std::size_t grid_rows, std::size_t grid_cols,
                                                       std::span<const GridPos> positions, FuzzMode mode,
                                                       RngStream& rng, std::vector<FuzzyCoord>* coords = nullptr);

/// One positional vector per position (rows of the result).
Matrix fuzzy_positional_encoding(const PositionalEncoding& pe, std::span<const GridPos> positions, RngStream& rng,
                                 std::vector<FuzzyCoord>* coords = nullptr);

/// Bilinear interpolation of the table at a fractional coordinate, clamped.
std::vector<double> bilinear_lookup(const PositionalEncoding& pe, double row, double col);

}  // namespace pathohr
