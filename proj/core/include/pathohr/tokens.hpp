#pragma once

#include <optional>
#include <vector>

#include "pathohr/numeric/matrix.hpp"

namespace pathohr {

struct GridPos {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

/// A sequence of token vectors (one row each) with per-token merge sizes
/// and, when the tokens come from a patch grid, their grid positions.
struct TokenSet {
  Matrix features;
  /// How many original tokens each row represents.
  std::vector<int> sizes;
  /// Empty when positions are unknown; otherwise one per row.
  std::vector<GridPos> positions;

  std::size_t count() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  bool has_positions() const { return !positions.empty(); }

  /// Unit sizes, no positions.
  static TokenSet from_features(Matrix features);

  /// Throws DimensionError when sizes/positions disagree with the row count.
  void validate() const;
};

}  // namespace pathohr
