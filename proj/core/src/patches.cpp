#include "pathohr/patch/patches.hpp"

#include "pathohr/error.hpp"

namespace pathohr {

PatchGrid extract_patches(const SlideImage& img, const TissueMask& mask, int patch_size,
                          double min_tissue_fraction) {
  if (patch_size < 1) throw ConfigError("extract_patches: patch_size must be >= 1");
  if (!(min_tissue_fraction >= 0.0 && min_tissue_fraction <= 1.0)) {
    throw ConfigError("extract_patches: min_tissue_fraction must lie in [0, 1]");
  }
  if (mask.width != img.width || mask.height != img.height) {
    throw DimensionError("extract_patches: mask and image dimensions differ");
  }
  PatchGrid grid;
  grid.patch_size = patch_size;
  if (patch_size > img.width || patch_size > img.height) {
    grid.warnings.push_back("patch_size " + std::to_string(patch_size) + " exceeds image " +
                            std::to_string(img.width) + "x" + std::to_string(img.height) + "; no patches");
    return grid;
  }
  grid.grid_rows = img.height / patch_size;
  grid.grid_cols = img.width / patch_size;
  const double area = static_cast<double>(patch_size) * patch_size;
  for (int gr = 0; gr < grid.grid_rows; ++gr) {
    for (int gc = 0; gc < grid.grid_cols; ++gc) {
      const int x0 = gc * patch_size;
      const int y0 = gr * patch_size;
      std::size_t tissue = 0;
      for (int y = y0; y < y0 + patch_size; ++y)
        for (int x = x0; x < x0 + patch_size; ++x) tissue += mask.at(x, y) ? 1 : 0;
      const double fraction = static_cast<double>(tissue) / area;
      if (fraction < min_tissue_fraction) continue;
      Patch p;
      p.grid_row = gr;
      p.grid_col = gc;
      p.tissue_fraction = fraction;
      p.pixels.reserve(static_cast<std::size_t>(patch_size) * patch_size);
      for (int y = y0; y < y0 + patch_size; ++y)
        for (int x = x0; x < x0 + patch_size; ++x) p.pixels.push_back(img.at(x, y));
      grid.patches.push_back(std::move(p));
    }
  }
  return grid;
}

PatchGrid slide_to_patches(const SlideImage& img, int patch_size, double min_tissue_fraction) {
  const OtsuResult threshold = otsu_threshold(histogram(img));
  TissueMaskResult mask = build_tissue_mask(img, threshold);
  PatchGrid grid = extract_patches(img, mask.mask, patch_size, min_tissue_fraction);
  if (mask.warning) grid.warnings.insert(grid.warnings.begin(), *mask.warning);
  return grid;
}

}  // namespace pathohr
