#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pathohr/numeric/matrix.hpp"
#include "pathohr/patch/patches.hpp"
#include "pathohr/tokens.hpp"

namespace pathohr {

inline constexpr std::size_t kDefaultEmbeddingDim = 1024;
inline constexpr std::size_t kDefaultEncoderHidden = 256;

/// Fixed random two-layer MLP standing in for a pretrained patch encoder.
struct PatchEncoderParams {
  std::uint64_t seed = 0;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = kDefaultEncoderHidden;
  std::size_t out_dim = kDefaultEmbeddingDim;
  Matrix w1;  // input_dim x hidden_dim
  Matrix b1;  // 1 x hidden_dim
  Matrix w2;  // hidden_dim x out_dim
  Matrix b2;  // 1 x out_dim
};

/// Weights depend only on (seed, patch_size, hidden_dim, out_dim).
PatchEncoderParams make_patch_encoder(std::uint64_t seed, int patch_size,
                                      std::size_t hidden_dim = kDefaultEncoderHidden,
                                      std::size_t out_dim = kDefaultEmbeddingDim);

/// flatten -> scale to [0, 1] -> linear -> GELU -> linear -> L2 normalize.
std::vector<double> encode_patch(std::span<const std::uint8_t> pixels, const PatchEncoderParams& params);

/// One unit-size token per patch, in grid order, carrying grid positions.
/// Throws EmptyInputError on an empty grid.
TokenSet encode_grid(const PatchGrid& grid, const PatchEncoderParams& params);

}  // namespace pathohr
