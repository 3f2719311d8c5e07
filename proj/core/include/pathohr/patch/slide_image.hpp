#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace pathohr {

/// 8-bit grayscale image, row-major.
struct SlideImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  SlideImage() = default;
  SlideImage(int width, int height, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const SlideImage&, const SlideImage&) = default;
};

/// Boolean per-pixel tissue flags (1 = tissue), same layout as SlideImage.
struct TissueMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  TissueMask() = default;
  TissueMask(int width, int height, bool fill = false);

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;

  friend bool operator==(const TissueMask&, const TissueMask&) = default;
};

// Binary PGM ("P5", maxval 255). Header comments are accepted on read;
// writes emit "P5\n<w> <h>\n255\n" followed by the raw bytes.
SlideImage read_pgm(std::istream& in);
SlideImage read_pgm(const std::filesystem::path& path);
void write_pgm(std::ostream& out, const SlideImage& img);
void write_pgm(const std::filesystem::path& path, const SlideImage& img);

/// Mask as PGM with tissue = 255, background = 0.
SlideImage mask_to_image(const TissueMask& mask);
void write_mask_pgm(const std::filesystem::path& path, const TissueMask& mask);

}  // namespace pathohr
