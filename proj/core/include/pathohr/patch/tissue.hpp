#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "pathohr/patch/slide_image.hpp"

namespace pathohr {

using Histogram = std::array<std::uint64_t, 256>;

Histogram histogram(const SlideImage& img);

struct OtsuResult {
  int level = 0;
  /// True when every threshold has zero between-class variance (e.g. a
  /// constant image); level is then 0.
  bool degenerate = false;
};

/// Between-class variance w0 * w1 * (mu0 - mu1)^2 for the split
/// {levels <= t} | {levels > t}. Zero when either class is empty.
double between_class_variance(const Histogram& hist, int t);

/// Level maximizing between-class variance; ties go to the smallest level.
/// Throws EmptyInputError on an all-zero histogram.
OtsuResult otsu_threshold(const Histogram& hist);

/// Tissue = intensity <= level (stained tissue is darker than background).
TissueMask threshold_mask(const SlideImage& img, int level);

/// Flips every background region that is not 4-connected to the image
/// border to tissue.
TissueMask fill_holes(const TissueMask& mask);

struct TissueMaskResult {
  TissueMask mask;
  std::optional<std::string> warning;
};

/// threshold_mask + fill_holes. A degenerate threshold yields an
/// all-background mask and a warning.
TissueMaskResult build_tissue_mask(const SlideImage& img, const OtsuResult& threshold);

}  // namespace pathohr
