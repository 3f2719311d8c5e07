#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pathohr/patch/slide_image.hpp"
#include "pathohr/patch/tissue.hpp"

namespace pathohr {

inline constexpr double kDefaultMinTissueFraction = 0.5;

struct Patch {
  int grid_row = 0;
  int grid_col = 0;
  /// patch_size * patch_size intensities, row-major.
  std::vector<std::uint8_t> pixels;
  double tissue_fraction = 0.0;
};

struct PatchGrid {
  int patch_size = 0;
  /// Full tiles per axis, including discarded ones.
  int grid_rows = 0;
  int grid_cols = 0;
  std::vector<Patch> patches;
  std::vector<std::string> warnings;
};

/// Non-overlapping tiling from (0, 0); partial edge tiles are dropped and a
/// tile is kept iff its tissue fraction >= min_tissue_fraction. Output is in
/// row-major grid order.
PatchGrid extract_patches(const SlideImage& img, const TissueMask& mask, int patch_size,
                          double min_tissue_fraction = kDefaultMinTissueFraction);

/// Otsu threshold -> hole-filled mask -> extract_patches. Mask warnings are
/// forwarded into the grid.
PatchGrid slide_to_patches(const SlideImage& img, int patch_size,
                           double min_tissue_fraction = kDefaultMinTissueFraction);

}  // namespace pathohr
