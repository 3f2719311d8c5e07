#include "pathohr/patch/tissue.hpp"

#include <vector>

#include "pathohr/error.hpp"

namespace pathohr {

Histogram histogram(const SlideImage& img) {
  Histogram h{};
  for (std::uint8_t p : img.pixels) ++h[p];
  return h;
}

namespace {

struct Split {
  std::uint64_t n0 = 0;
  std::uint64_t s0 = 0;
};

// (S0 * N - S * n0)^2 / (N^2 * n0 * n1) equals w0 * w1 * (mu0 - mu1)^2.
// The difference is formed in exact integer arithmetic so that thresholds
// with identical class statistics compare bit-equal.
double variance_from(const Split& split, std::uint64_t total_n, std::uint64_t total_s) {
  const std::uint64_t n1 = total_n - split.n0;
  if (split.n0 == 0 || n1 == 0) return 0.0;
  const __int128 diff = static_cast<__int128>(split.s0) * total_n - static_cast<__int128>(total_s) * split.n0;
  const double d = static_cast<double>(diff);
  const double n = static_cast<double>(total_n);
  return (d * d) / (n * n * static_cast<double>(split.n0) * static_cast<double>(n1));
}

}  // namespace

double between_class_variance(const Histogram& hist, int t) {
  Split split;
  std::uint64_t n = 0;
  std::uint64_t s = 0;
  for (int level = 0; level < 256; ++level) {
    n += hist[level];
    s += hist[level] * static_cast<std::uint64_t>(level);
    if (level <= t) {
      split.n0 += hist[level];
      split.s0 += hist[level] * static_cast<std::uint64_t>(level);
    }
  }
  return variance_from(split, n, s);
}

OtsuResult otsu_threshold(const Histogram& hist) {
  std::uint64_t n = 0;
  std::uint64_t s = 0;
  for (int level = 0; level < 256; ++level) {
    n += hist[level];
    s += hist[level] * static_cast<std::uint64_t>(level);
  }
  if (n == 0) throw EmptyInputError("otsu_threshold: empty histogram");

  OtsuResult best;
  double best_var = 0.0;
  Split split;
  for (int t = 0; t < 256; ++t) {
    split.n0 += hist[t];
    split.s0 += hist[t] * static_cast<std::uint64_t>(t);
    const double v = variance_from(split, n, s);
    if (v > best_var) {
      best_var = v;
      best.level = t;
    }
  }
  best.degenerate = best_var == 0.0;
  return best;
}

TissueMask threshold_mask(const SlideImage& img, int level) {
  TissueMask mask(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) mask.bits[i] = img.pixels[i] <= level ? 1 : 0;
  return mask;
}

TissueMask fill_holes(const TissueMask& mask) {
  const int w = mask.width;
  const int h = mask.height;
  // Background reachable from the border stays background; everything else
  // becomes tissue.
  std::vector<std::uint8_t> outside(mask.bits.size(), 0);
  std::vector<std::size_t> stack;
  auto seed = [&](int x, int y) {
    const std::size_t i = static_cast<std::size_t>(y) * w + x;
    if (!mask.bits[i] && !outside[i]) {
      outside[i] = 1;
      stack.push_back(i);
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(x, 0);
    seed(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed(0, y);
    seed(w - 1, y);
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const int x = static_cast<int>(i % w);
    const int y = static_cast<int>(i / w);
    if (x > 0) seed(x - 1, y);
    if (x + 1 < w) seed(x + 1, y);
    if (y > 0) seed(x, y - 1);
    if (y + 1 < h) seed(x, y + 1);
  }
  TissueMask out(w, h);
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = outside[i] ? 0 : 1;
  return out;
}

TissueMaskResult build_tissue_mask(const SlideImage& img, const OtsuResult& threshold) {
  if (threshold.degenerate) {
    return {TissueMask(img.width, img.height, false),
            "degenerate Otsu threshold (no intensity contrast); mask is all background"};
  }
  return {fill_holes(threshold_mask(img, threshold.level)), std::nullopt};
}

}  // namespace pathohr
