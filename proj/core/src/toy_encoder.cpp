#include "pathohr/encoder/toy_encoder.hpp"

#include <cmath>
#include <string>

#include "pathohr/error.hpp"
#include "pathohr/numeric/kernels.hpp"
#include "pathohr/numeric/rng.hpp"

namespace pathohr {

namespace {

constexpr std::uint64_t kEncoderStream = 0x454E434F44455231ULL;

Matrix xavier(std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (double& v : m.data()) v = rng.uniform(-limit, limit);
  return m;
}

// Rows of `pixels` are flattened patches; returns unit-norm embeddings.
Matrix encode_rows(const Matrix& pixels, const PatchEncoderParams& p) {
  Matrix hidden = linear_apply(pixels, p.w1, p.b1.data());
  for (double& v : hidden.data()) v = gelu(v);
  Matrix out = linear_apply(hidden, p.w2, p.b2.data());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double ss = 0.0;
    for (double v : row) ss += v * v;
    const double norm = std::sqrt(ss);
    if (norm > 0.0)
      for (double& v : row) v /= norm;
  }
  return out;
}

}  // namespace

PatchEncoderParams make_patch_encoder(std::uint64_t seed, int patch_size, std::size_t hidden_dim,
                                      std::size_t out_dim) {
  if (patch_size < 1) throw ConfigError("make_patch_encoder: patch_size must be >= 1");
  if (hidden_dim == 0 || out_dim == 0) throw ConfigError("make_patch_encoder: dimensions must be positive");
  PatchEncoderParams p;
  p.seed = seed;
  p.input_dim = static_cast<std::size_t>(patch_size) * static_cast<std::size_t>(patch_size);
  p.hidden_dim = hidden_dim;
  p.out_dim = out_dim;
  // The stream depends on the shape so that different patch sizes get
  // unrelated weights from the same seed.
  RngStream rng(seed, kEncoderStream ^ (p.input_dim << 32) ^ (hidden_dim << 16) ^ out_dim);
  p.w1 = xavier(p.input_dim, hidden_dim, rng);
  p.b1 = Matrix(1, hidden_dim);
  for (double& v : p.b1.data()) v = rng.uniform(-0.1, 0.1);
  p.w2 = xavier(hidden_dim, out_dim, rng);
  p.b2 = Matrix(1, out_dim);
  for (double& v : p.b2.data()) v = rng.uniform(-0.1, 0.1);
  return p;
}

std::vector<double> encode_patch(std::span<const std::uint8_t> pixels, const PatchEncoderParams& params) {
  if (pixels.size() != params.input_dim) {
    throw DimensionError("encode_patch: payload length " + std::to_string(pixels.size()) + " != input_dim " +
                         std::to_string(params.input_dim));
  }
  Matrix row(1, pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) row(0, i) = pixels[i] / 255.0;
  Matrix out = encode_rows(row, params);
  return {out.data().begin(), out.data().end()};
}

TokenSet encode_grid(const PatchGrid& grid, const PatchEncoderParams& params) {
  if (grid.patches.empty()) throw EmptyInputError("encode_grid: no patches");
  Matrix pixels(grid.patches.size(), params.input_dim);
  TokenSet tokens;
  tokens.positions.reserve(grid.patches.size());
  for (std::size_t i = 0; i < grid.patches.size(); ++i) {
    const Patch& patch = grid.patches[i];
    if (patch.pixels.size() != params.input_dim) {
      throw DimensionError("encode_grid: patch payload length " + std::to_string(patch.pixels.size()) +
                           " != input_dim " + std::to_string(params.input_dim));
    }
    for (std::size_t j = 0; j < patch.pixels.size(); ++j) pixels(i, j) = patch.pixels[j] / 255.0;
    tokens.positions.push_back({patch.grid_row, patch.grid_col});
  }
  tokens.features = encode_rows(pixels, params);
  tokens.sizes.assign(grid.patches.size(), 1);
  return tokens;
}

}  // namespace pathohr
