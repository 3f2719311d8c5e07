#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "pathohr/merge/token_merge.hpp"
#include "pathohr/similarity/similarity.hpp"

namespace pathohr {

/// pathohr: transformer encoder with CLS readout and token merging.
/// tangle: gated-attention aggregation directly on patch features (the
/// no-merge baseline).
enum class ModelKind { pathohr, tangle };
enum class MergePlacement { post_loop, per_iteration };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);
std::string_view to_string(MergePlacement placement);
MergePlacement parse_merge_placement(std::string_view name);

struct ModelConfig {
  ModelKind model = ModelKind::pathohr;
  /// Patch side length in pixels used when embedding slides.
  std::size_t patch_size = 16;
  /// Width of incoming patch embeddings.
  std::size_t input_dim = 1024;
  /// Token width inside the encoder.
  std::size_t d = 32;
  /// Encoder blocks per outer iteration (shared across iterations).
  std::size_t N = 1;
  /// Outer iterations.
  std::size_t J = 1;
  std::size_t heads = 4;
  SimilarityMethod method = SimilarityMethod::cosine;
  /// Initial value of the learnable similarity temperature.
  double temperature = 1.0;
  MergeConfig merge;
  MergePlacement merge_placement = MergePlacement::post_loop;
  bool merge_enabled = true;
  /// Residual path around the merge; kept in sync with merge.residual.
  bool residual = false;
  /// Fuzzy positional offsets while training; exact lookup otherwise.
  bool fpe = true;
  std::size_t pos_grid_rows = 32;
  std::size_t pos_grid_cols = 32;
  /// Hidden width of the gated-attention paths.
  std::size_t attention_dim = 16;
  std::size_t num_classes = 2;
  std::uint64_t seed = 0;

  /// Throws ConfigError on inconsistent fields.
  void validate() const;
  /// merge with residual and mode resolved from the top-level fields.
  MergeConfig effective_merge() const;
  SimilarityConfig similarity_config() const;

  std::string to_json(int indent = 2) const;
  /// Missing fields keep their defaults; unknown fields are rejected.
  static ModelConfig from_json(std::string_view text);

  friend bool operator==(const ModelConfig& a, const ModelConfig& b) { return a.to_json() == b.to_json(); }
};

}  // namespace pathohr
