#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pathohr/merge/positional.hpp"
#include "pathohr/model/config.hpp"
#include "pathohr/numeric/parameters.hpp"
#include "pathohr/numeric/rng.hpp"
#include "pathohr/numeric/tape.hpp"
#include "pathohr/tokens.hpp"

namespace pathohr {

// Parameter naming. Every component stores its weights under a prefix so
// the whole model fits in one ordered ParameterSet:
//   <p>wq, <p>bq        d x d, 1 x d        shared-KV attention, queries
//   <p>wk               d x d/h             single key projection (no bias)
//   <p>wv, <p>bv        d x d/h, 1 x d/h    single value projection
//   <p>wo, <p>bo        d x d, 1 x d        output projection
// Encoder blocks add <p>ln1.*, <p>mqa.*, <p>ln2.*, <p>ffn.{w1,b1,w2,b2}.

void add_mqa_params(ParameterSet& params, const std::string& prefix, std::size_t d, std::size_t heads,
                    RngStream& rng);
void add_layer_norm_params(ParameterSet& params, const std::string& prefix, std::size_t d);
void add_encoder_block_params(ParameterSet& params, const std::string& prefix, std::size_t d, std::size_t heads,
                              RngStream& rng);
/// <p>q.w, <p>k.w: two bias-free linear maps.
void add_projection_head_params(ParameterSet& params, const std::string& prefix, std::size_t d, RngStream& rng);

/// All weights of the transformer path, deterministic in cfg.seed.
ParameterSet init_encoder_params(const ModelConfig& cfg);

// --- Tape forms -------------------------------------------------------------

ad::Var mqa_var(const BoundParameters& p, const std::string& prefix, ad::Var x, std::size_t heads);
ad::Var encoder_block_var(const BoundParameters& p, const std::string& prefix, ad::Var x, std::size_t heads);
std::pair<ad::Var, ad::Var> projection_head_var(const BoundParameters& p, const std::string& prefix, ad::Var x);

struct ForwardDiagnostics {
  /// Patch tokens entering the encoder (CLS excluded).
  std::size_t patch_tokens = 0;
  /// Patch tokens right before / after the last merge.
  std::size_t tokens_before_merge = 0;
  std::size_t tokens_after_merge = 0;
  bool merge_applied = false;
  /// Analytic MACs of every attention application in this pass, and what
  /// they would have been without merging.
  std::uint64_t attention_macs = 0;
  std::uint64_t attention_macs_unmerged = 0;
};

/// Full forward pass on the tape. Returns 1 x num_classes logits. With
/// per_iteration placement the patch tokens are merged at the start of
/// every outer iteration, so all attention in the pass sees the merged set.
/// `mode` selects fuzzy (train) or exact (inference) positional lookup;
/// with cfg.fpe off the lookup is always exact.
ad::Var pathohr_forward_var(const BoundParameters& p, const TokenSet& embeddings, const ModelConfig& cfg,
                            FuzzMode mode, RngStream& rng, ForwardDiagnostics* diagnostics = nullptr);

// --- Plain-value operations -------------------------------------------------

TokenSet multi_query_attention(const TokenSet& tokens, const ParameterSet& params, const std::string& prefix,
                               std::size_t heads);
TokenSet encoder_block(const TokenSet& tokens, const ParameterSet& params, const std::string& prefix,
                       std::size_t heads);
std::pair<Matrix, Matrix> projection_head(const TokenSet& tokens, const ParameterSet& params,
                                          const std::string& prefix);

struct ForwardResult {
  std::vector<double> logits;
  ForwardDiagnostics diagnostics;
};

ForwardResult pathohr_forward(const TokenSet& embeddings, const ModelConfig& cfg, const ParameterSet& params,
                              RngStream& rng, FuzzMode mode = FuzzMode::inference);

struct AttentionMacs {
  std::uint64_t projections = 0;
  std::uint64_t scores = 0;
  std::uint64_t mixing = 0;
  std::uint64_t output = 0;
  std::uint64_t total() const { return projections + scores + mixing + output; }
};

/// Exact MACs of one multi_query_attention call on n tokens of width d with
/// h heads (h must divide d). Bias additions, scaling and softmax are not
/// multiply-accumulates and are not counted.
AttentionMacs attention_mac_breakdown(std::size_t n, std::size_t d, std::size_t h);
std::uint64_t count_attention_macs(std::size_t n, std::size_t d, std::size_t h);

/// Grid positions are clamped into the positional table so slides larger
/// than the table reuse its border entries.
std::vector<GridPos> clamp_positions(const std::vector<GridPos>& positions, std::size_t rows, std::size_t cols);

}  // namespace pathohr
