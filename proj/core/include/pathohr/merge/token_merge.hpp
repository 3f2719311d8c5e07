#pragma once

#include <functional>
#include <string_view>
#include <utility>
#include <vector>

#include "pathohr/numeric/tape.hpp"
#include "pathohr/similarity/similarity.hpp"
#include "pathohr/tokens.hpp"

namespace pathohr {

enum class MergeMode { atm, tome };

std::string_view to_string(MergeMode mode);
MergeMode parse_merge_mode(std::string_view name);

struct MergeConfig {
  /// Similarity entries strictly below this value are dropped before the
  /// row normalization. Distinct from the similarity temperature.
  double merge_threshold = 0.0;
  std::size_t target_tokens = 64;
  /// Pairs merged per ToMe step; 0 merges as many as the target allows
  /// (at most half the tokens per step).
  std::size_t tome_r = 0;
  bool residual = false;
  MergeMode mode = MergeMode::atm;

  void validate() const;
};

struct SourceWeight {
  std::size_t source;
  double weight;
};

struct MergeResult {
  TokenSet tokens;
  /// For each output token, the input tokens it mixes and their weights
  /// (summing to 1). With residual enabled the pooled residual term is not
  /// part of the provenance.
  std::vector<std::vector<SourceWeight>> provenance;
};

/// Adaptive token merge: pooled queries cross-attend over all input tokens
/// and each output is the similarity-weighted combination of the inputs.
/// Repeats halving until count <= cfg.target_tokens. Throws
/// MergeNotApplicable for n < 2. `proj` is needed for the semantic method.
MergeResult atm_merge(const TokenSet& tokens, const MergeConfig& cfg, const SimilarityConfig& sim_cfg,
                      const SemanticProjector* proj = nullptr);

/// Bipartite soft matching: merges the r best-scoring A->B pairs by
/// size-weighted averaging. Output has exactly n - r tokens in original
/// relative order. Requires 0 <= r <= n / 2.
MergeResult tome_merge(const TokenSet& tokens, std::size_t r);

// --- Differentiable forms used inside the model ---------------------------

struct MergeVar {
  ad::Var tokens;
  std::vector<int> sizes;
  std::vector<GridPos> positions;
  /// Composite mixing weights (outputs x original inputs).
  Matrix weights;
};

/// Maps current tokens to (queries, keys) before each merge step.
using QueryKeyFn = std::function<std::pair<ad::Var, ad::Var>(ad::Var tokens)>;
/// Maps current tokens to the ToMe matching metric.
using MetricFn = std::function<ad::Var(ad::Var tokens)>;

/// Rows of `scores` restricted to entries >= threshold, then normalized:
/// renormalized by their sum when already row-normalized, otherwise by a
/// masked softmax. Rows with nothing left become uniform.
ad::Var threshold_weights(ad::Var scores, double threshold, bool row_normalized);

/// One ATM halving step (n -> ceil(n / 2)).
MergeVar atm_step(ad::Var tokens, const std::vector<int>& sizes, const std::vector<GridPos>& positions,
                  const MergeConfig& cfg, const SimilarityConfig& sim_cfg, ad::Var temperature,
                  const SemanticVars* proj, const QueryKeyFn& project);

/// One ToMe step merging r pairs; the discrete matching uses the metric's
/// value and is not differentiated.
MergeVar tome_step(ad::Var tokens, const std::vector<int>& sizes, const std::vector<GridPos>& positions,
                   const Matrix& metric, std::size_t r, bool residual, double zero_norm_eps = 1e-12);

/// Repeats atm_step or tome_step (by cfg.mode) until count <= target.
/// Returns the input unchanged when it is already small enough.
MergeVar merge_to_target(ad::Var tokens, std::vector<int> sizes, std::vector<GridPos> positions, const MergeConfig& cfg,
                         const SimilarityConfig& sim_cfg, ad::Var temperature, const SemanticVars* proj,
                         const QueryKeyFn& project, const MetricFn& metric);

/// ToMe pairs per step: cfg.tome_r if set, else n - target, capped at n / 2.
std::size_t tome_pairs_for_step(std::size_t n, const MergeConfig& cfg);

}  // namespace pathohr
