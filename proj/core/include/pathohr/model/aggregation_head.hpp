#pragma once

#include <span>
#include <string>
#include <vector>

#include "pathohr/model/config.hpp"
#include "pathohr/numeric/parameters.hpp"
#include "pathohr/numeric/rng.hpp"
#include "pathohr/numeric/tape.hpp"
#include "pathohr/tokens.hpp"

namespace pathohr {

// Gated-attention MIL aggregation. Parameters under <p>:
//   pre.w1 (in x d), pre.b1, pre.ln.{g,b}, pre.w2 (d x d), pre.b2
//   att.wv (d x a), att.bv     tanh path
//   att.wu (d x a), att.bu     sigmoid path
//   att.w  (a x 1)             scoring vector

void add_gated_attention_params(ParameterSet& params, const std::string& prefix, std::size_t input_dim,
                                std::size_t d, std::size_t attention_dim, RngStream& rng);

/// Aggregation weights plus the linear prediction head ("head.w", "head.b").
ParameterSet init_tangle_params(const ModelConfig& cfg);

ad::Var pre_attention_var(const BoundParameters& p, const std::string& prefix, ad::Var x);
/// 1 x n softmax weights.
ad::Var gated_attention_weights_var(const BoundParameters& p, const std::string& prefix, ad::Var features);
/// weights (1 x n) times features (n x d).
ad::Var slide_embedding_var(ad::Var features, ad::Var weights);
/// Full baseline: pre-attention, gated weights, slide embedding, head.
ad::Var tangle_forward_var(const BoundParameters& p, const TokenSet& embeddings, const ModelConfig& cfg);

TokenSet pre_attention(const TokenSet& features, const ParameterSet& params, const std::string& prefix = "agg.");
/// Throws EmptyInputError for no tokens.
std::vector<double> gated_attention_weights(const TokenSet& features, const ParameterSet& params,
                                            const std::string& prefix = "agg.");
/// Σ w_i x_i. Throws DimensionError when lengths differ.
std::vector<double> slide_embedding(const TokenSet& features, std::span<const double> weights);
/// Mean squared difference. Throws DimensionError when lengths differ.
double mse_loss(std::span<const double> pred, std::span<const double> target);

}  // namespace pathohr
