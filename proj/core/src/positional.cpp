#include "pathohr/merge/positional.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pathohr/error.hpp"

namespace pathohr {

namespace {

// Taps of a clamped bilinear lookup; zero-weight taps are dropped.
std::vector<ad::WeightedIndex> bilinear_taps(std::size_t rows, std::size_t cols, double r, double c) {
  r = std::clamp(r, 0.0, static_cast<double>(rows - 1));
  c = std::clamp(c, 0.0, static_cast<double>(cols - 1));
  const auto r0 = static_cast<std::size_t>(std::floor(r));
  const auto c0 = static_cast<std::size_t>(std::floor(c));
  const std::size_t r1 = std::min(r0 + 1, rows - 1);
  const std::size_t c1 = std::min(c0 + 1, cols - 1);
  const double fr = r - static_cast<double>(r0);
  const double fc = c - static_cast<double>(c0);
  std::vector<ad::WeightedIndex> taps;
  auto push = [&](std::size_t i, std::size_t j, double w) {
    if (w != 0.0) taps.push_back({i * cols + j, w});
  };
  push(r0, c0, (1.0 - fr) * (1.0 - fc));
  push(r0, c1, (1.0 - fr) * fc);
  push(r1, c0, fr * (1.0 - fc));
  push(r1, c1, fr * fc);
  return taps;
}

}  // namespace

std::vector<std::vector<ad::WeightedIndex>> fuzzy_taps(std::size_t grid_rows, std::size_t grid_cols,
                                                       std::span<const GridPos> positions, FuzzMode mode,
                                                       RngStream& rng, std::vector<FuzzyCoord>* coords) {
  if (grid_rows == 0 || grid_cols == 0) throw IndexError("positional table is empty");
  std::vector<std::vector<ad::WeightedIndex>> taps;
  taps.reserve(positions.size());
  if (coords) coords->clear();
  for (const GridPos& p : positions) {
    if (p.row < 0 || p.col < 0 || static_cast<std::size_t>(p.row) >= grid_rows ||
        static_cast<std::size_t>(p.col) >= grid_cols) {
      throw IndexError("position (" + std::to_string(p.row) + ", " + std::to_string(p.col) + ") outside " +
                       std::to_string(grid_rows) + "x" + std::to_string(grid_cols) + " positional table");
    }
    double r = p.row;
    double c = p.col;
    if (mode == FuzzMode::train) {
      r += rng.uniform(-0.5, 0.5);
      c += rng.uniform(-0.5, 0.5);
    }
    if (coords) coords->push_back({r, c});
    taps.push_back(bilinear_taps(grid_rows, grid_cols, r, c));
  }
  return taps;
}

Matrix fuzzy_positional_encoding(const PositionalEncoding& pe, std::span<const GridPos> positions, RngStream& rng,
                                 std::vector<FuzzyCoord>* coords) {
  if (pe.table.rows() != pe.grid_rows * pe.grid_cols) {
    throw DimensionError("positional table has " + std::to_string(pe.table.rows()) + " rows for a " +
                         std::to_string(pe.grid_rows) + "x" + std::to_string(pe.grid_cols) + " grid");
  }
  const auto taps = fuzzy_taps(pe.grid_rows, pe.grid_cols, positions, pe.mode, rng, coords);
  Matrix out(positions.size(), pe.dim());
  for (std::size_t t = 0; t < taps.size(); ++t)
    for (const auto& tap : taps[t])
      for (std::size_t c = 0; c < pe.dim(); ++c) out(t, c) += tap.weight * pe.table(tap.row, c);
  return out;
}

std::vector<double> bilinear_lookup(const PositionalEncoding& pe, double row, double col) {
  std::vector<double> out(pe.dim(), 0.0);
  for (const auto& tap : bilinear_taps(pe.grid_rows, pe.grid_cols, row, col))
    for (std::size_t c = 0; c < pe.dim(); ++c) out[c] += tap.weight * pe.table(tap.row, c);
  return out;
}

}  // namespace pathohr
