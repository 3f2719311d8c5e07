#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pathohr/patch/slide_image.hpp"

namespace pathohr {

struct SyntheticParams {
  int width = 256;
  int height = 256;
  double signal_fraction = 0.3;
  /// Side of the square regions carrying the signal texture.
  int signal_block = 16;
  int background_level = 230;
  int tissue_level = 90;
  /// Half-widths of the uniform integer noise.
  int background_noise = 10;
  int tissue_noise = 12;
  /// Checkerboard pixels are tissue_level +/- this amplitude.
  int checker_amplitude = 40;
};

/// Square signal region; only its tissue pixels carry the texture.
struct SignalBlock {
  int x = 0;
  int y = 0;
  int size = 0;
  std::size_t tissue_pixels = 0;
};

struct SyntheticSlide {
  SlideImage image;
  int label = 0;
  /// Requested fraction; the realized one is signal_pixels / tissue_pixels.
  double signal_fraction = 0.0;
  std::uint64_t seed = 0;
  std::size_t tissue_pixels = 0;
  std::size_t signal_pixels = 0;
  std::vector<SignalBlock> signal_blocks;
};

/// A bright noisy background with one dark, wobbly tissue blob. Label-1
/// slides cover about signal_fraction of the tissue with a one-pixel
/// checkerboard (within one block of area); label-0 slides have none.
/// Throws ConfigError for dims below signal_block, a fraction outside
/// [0, 1], a label other than 0/1, or label 1 with zero fraction.
SyntheticSlide gen_synthetic_slide(std::uint64_t seed, int width, int height, int label, double signal_fraction,
                                   const SyntheticParams& params = {});

enum class Split { train, val, test };
std::string_view to_string(Split split);
Split parse_split(std::string_view name);

/// Deterministic stratified 8:1:1 split: floor(n/10) test, floor(n/10)
/// validation, the rest training. Classes are interleaved before cutting so
/// both held-out sets receive both labels whenever the counts allow it.
std::vector<Split> split_assignment(const std::vector<int>& labels, std::uint64_t seed);

struct SyntheticDataset {
  std::vector<SyntheticSlide> slides;
  std::vector<Split> splits;
};

/// round(n * class_balance) positives. Requires n >= 10 and a balance that
/// leaves both classes non-empty.
SyntheticDataset gen_dataset(std::size_t n_slides, double class_balance, std::uint64_t seed,
                             const SyntheticParams& params = {});

struct ManifestEntry {
  std::string filename;
  int label = 0;
  Split split = Split::train;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline constexpr std::string_view kManifestName = "manifest.csv";

/// Writes slide_NNNN.pgm files and manifest.csv (filename,label,split).
void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& dataset);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
/// Throws FormatError on a malformed manifest.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace pathohr
