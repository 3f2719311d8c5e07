#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pathohr/numeric/matrix.hpp"
#include "pathohr/numeric/parameters.hpp"
#include "pathohr/numeric/tape.hpp"
#include "pathohr/tokens.hpp"

namespace pathohr {

enum class SimilarityMethod { pooled_attention, euclidean, cosine, attention_score, semantic, tome };

inline constexpr std::array<SimilarityMethod, 6> kAllSimilarityMethods = {
    SimilarityMethod::pooled_attention, SimilarityMethod::euclidean, SimilarityMethod::cosine,
    SimilarityMethod::attention_score,  SimilarityMethod::semantic,  SimilarityMethod::tome};

/// The exact CLI/JSON spelling, e.g. "attention_score".
std::string_view to_string(SimilarityMethod method);
/// Throws ConfigError for an unknown name.
SimilarityMethod parse_similarity_method(std::string_view name);

struct SimilarityConfig {
  SimilarityMethod method = SimilarityMethod::cosine;
  /// Learnable temperature; this is the initial/current value.
  double temperature = 1.0;
  /// Feature dimension used for 1/sqrt(d) scaling; 0 means "token width".
  std::size_t head_dim = 0;
  double zero_norm_eps = 1e-12;

  void validate() const;
};

struct SimilarityMatrix {
  Matrix scores;
  bool row_normalized = false;
  SimilarityMethod method = SimilarityMethod::cosine;

  std::size_t rows() const { return scores.rows(); }
  std::size_t cols() const { return scores.cols(); }
};

/// Two 2-layer perceptrons f_q, f_k : d -> d_sem with GELU between layers and
/// no output bias.
/// Parameters are stored under "<prefix>q.w1", "<prefix>q.b1", ... so they can
/// live inside a larger model ParameterSet.
struct SemanticProjector {
  std::size_t in_dim = 0;
  std::size_t sem_dim = 0;
  ParameterSet params;
};

/// d_sem defaults to max(1, d / 4); hidden width is d.
SemanticProjector make_semantic_projector(std::size_t d, std::uint64_t seed, std::size_t sem_dim = 0);
/// Registers projector weights into `params` under `prefix`.
void add_semantic_projector(ParameterSet& params, const std::string& prefix, std::size_t d, std::size_t sem_dim,
                            RngStream& rng);
std::size_t default_semantic_dim(std::size_t d);

// --- Plain-value similarity operations ------------------------------------

/// Averages adjacent non-overlapping pairs; an odd tail token passes
/// through. Sizes add; the position of the first token of a pair is kept.
TokenSet pool_queries(const TokenSet& tokens);

/// exp(-||q_i - k_j|| * temperature); not row-normalized.
SimilarityMatrix euclidean_sim(const Matrix& q, const Matrix& k, const SimilarityConfig& cfg);
/// temperature * cos(q_i, k_j); 0 where either norm < zero_norm_eps.
SimilarityMatrix cosine_sim(const Matrix& q, const Matrix& k, const SimilarityConfig& cfg);
/// softmax_j(temperature * q_i . k_j / sqrt(d)).
SimilarityMatrix attention_score_sim(const Matrix& q, const Matrix& k, const SimilarityConfig& cfg);
/// softmax_j(q_i . k_j / sqrt(d)); queries are expected to be pooled already.
SimilarityMatrix pooled_attention_sim(const Matrix& q, const Matrix& k, const SimilarityConfig& cfg);
/// softmax_j(f_q(q_i) . f_k(k_j) / sqrt(d_sem)).
SimilarityMatrix semantic_sim(const Matrix& q, const Matrix& k, const SemanticProjector& proj);

struct ToMeScores {
  /// Source indices of the two partitions (even -> A, odd -> B).
  std::vector<std::size_t> a;
  std::vector<std::size_t> b;
  /// Cosine similarity A x B before the softmax.
  Matrix cosine;
  /// Row-wise softmax of `cosine`.
  SimilarityMatrix similarity;
};

/// Bipartite scoring; throws MergeNotApplicable when n < 2.
ToMeScores tome_sim(const TokenSet& tokens, double zero_norm_eps = 1e-12);

/// Dispatch on cfg.method for the query/key methods. `proj` is required for
/// semantic; tome is not a query/key method and throws ConfigError.
SimilarityMatrix compute_similarity(const Matrix& q, const Matrix& k, const SimilarityConfig& cfg,
                                    const SemanticProjector* proj = nullptr);

// --- Differentiable forms --------------------------------------------------

/// Row-averaging matrix used by pool_queries: ceil(n/2) x n.
Matrix pooling_matrix(std::size_t n);

struct SemanticVars {
  ad::Var q_w1, q_b1, q_w2;
  ad::Var k_w1, k_b1, k_w2;
  std::size_t sem_dim = 0;
};

SemanticVars bind_semantic_projector(const BoundParameters& params, const std::string& prefix, std::size_t sem_dim);

struct SimilarityVar {
  ad::Var scores;
  bool row_normalized = false;
};

/// Tape form of compute_similarity. `temperature` is a 1 x 1 variable.
SimilarityVar similarity_var(SimilarityMethod method, ad::Var q, ad::Var k, ad::Var temperature,
                             const SimilarityConfig& cfg, const SemanticVars* proj = nullptr);

}  // namespace pathohr
