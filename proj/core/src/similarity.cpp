#include "pathohr/similarity/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pathohr/error.hpp"
#include "pathohr/numeric/kernels.hpp"
#include "pathohr/numeric/ops.hpp"

namespace pathohr {

std::string_view to_string(SimilarityMethod method) {
  switch (method) {
    case SimilarityMethod::pooled_attention: return "pooled_attention";
    case SimilarityMethod::euclidean: return "euclidean";
    case SimilarityMethod::cosine: return "cosine";
    case SimilarityMethod::attention_score: return "attention_score";
    case SimilarityMethod::semantic: return "semantic";
    case SimilarityMethod::tome: return "tome";
  }
  return "unknown";
}

SimilarityMethod parse_similarity_method(std::string_view name) {
  for (SimilarityMethod m : kAllSimilarityMethods)
    if (to_string(m) == name) return m;
  throw ConfigError("unknown similarity method '" + std::string(name) + "'");
}

void SimilarityConfig::validate() const {
  if (!std::isfinite(temperature)) throw ConfigError("similarity temperature must be finite");
  if (!(zero_norm_eps > 0.0)) throw ConfigError("zero_norm_eps must be positive");
}

std::size_t default_semantic_dim(std::size_t d) { return std::max<std::size_t>(1, d / 4); }

void add_semantic_projector(ParameterSet& params, const std::string& prefix, std::size_t d, std::size_t sem_dim,
                            RngStream& rng) {
  for (const char* side : {"q", "k"}) {
    const std::string p = prefix + side + ".";
    params.add_xavier(p + "w1", d, d, rng);
    params.add_constant(p + "b1", 1, d, 0.0);
    params.add_xavier(p + "w2", d, sem_dim, rng);
  }
}

SemanticProjector make_semantic_projector(std::size_t d, std::uint64_t seed, std::size_t sem_dim) {
  if (d == 0) throw ConfigError("semantic projector: input dimension must be positive");
  SemanticProjector proj;
  proj.in_dim = d;
  proj.sem_dim = sem_dim == 0 ? default_semantic_dim(d) : sem_dim;
  RngStream rng(seed, 0x53454D);
  add_semantic_projector(proj.params, "", d, proj.sem_dim, rng);
  return proj;
}

SemanticVars bind_semantic_projector(const BoundParameters& params, const std::string& prefix, std::size_t sem_dim) {
  SemanticVars v;
  v.q_w1 = params[prefix + "q.w1"];
  v.q_b1 = params[prefix + "q.b1"];
  v.q_w2 = params[prefix + "q.w2"];
  v.k_w1 = params[prefix + "k.w1"];
  v.k_b1 = params[prefix + "k.b1"];
  v.k_w2 = params[prefix + "k.w2"];
  v.sem_dim = sem_dim;
  return v;
}

Matrix pooling_matrix(std::size_t n) {
  const std::size_t out = (n + 1) / 2;
  Matrix p(out, n);
  for (std::size_t i = 0; i < out; ++i) {
    if (2 * i + 1 < n) {
      p(i, 2 * i) = 0.5;
      p(i, 2 * i + 1) = 0.5;
    } else {
      p(i, 2 * i) = 1.0;
    }
  }
  return p;
}

TokenSet pool_queries(const TokenSet& tokens) {
  tokens.validate();
  if (tokens.count() == 0) throw EmptyInputError("pool_queries: empty token set");
  const std::size_t n = tokens.count();
  TokenSet out;
  out.features = matmul(pooling_matrix(n), tokens.features);
  for (std::size_t i = 0; i < n; i += 2) {
    out.sizes.push_back(tokens.sizes[i] + (i + 1 < n ? tokens.sizes[i + 1] : 0));
    if (tokens.has_positions()) out.positions.push_back(tokens.positions[i]);
  }
  return out;
}

namespace {

void check_qk(const Matrix& q, const Matrix& k, const char* what) {
  if (q.empty() || k.empty()) throw DimensionError(std::string(what) + ": empty query or key set");
  if (q.cols() != k.cols()) {
    throw DimensionError(std::string(what) + ": query width " + std::to_string(q.cols()) + " != key width " +
                         std::to_string(k.cols()));
  }
}

double inv_sqrt_dim(const SimilarityConfig& cfg, std::size_t width) {
  const std::size_t d = cfg.head_dim == 0 ? width : cfg.head_dim;
  return 1.0 / std::sqrt(static_cast<double>(d));
}

// The output layer has no bias; on the key side it would cancel in the softmax.
ad::Var semantic_side(ad::Var x, ad::Var w1, ad::Var b1, ad::Var w2) {
  return ad::matmul(ad::gelu(ad::linear(x, w1, b1)), w2);
}

}  // namespace

SimilarityVar similarity_var(SimilarityMethod method, ad::Var q, ad::Var k, ad::Var temperature,
                             const SimilarityConfig& cfg, const SemanticVars* proj) {
  check_qk(q.value(), k.value(), "similarity");
  switch (method) {
    case SimilarityMethod::euclidean: {
      ad::Var dist = ad::pairwise_distance(q, k);
      return {ad::exp(ad::scale(ad::scale_by(dist, temperature), -1.0)), false};
    }
    case SimilarityMethod::cosine: {
      ad::Var qn = ad::normalize_rows(q, cfg.zero_norm_eps);
      ad::Var kn = ad::normalize_rows(k, cfg.zero_norm_eps);
      return {ad::scale_by(ad::matmul_nt(qn, kn), temperature), false};
    }
    case SimilarityMethod::attention_score: {
      ad::Var logits = ad::scale(ad::scale_by(ad::matmul_nt(q, k), temperature), inv_sqrt_dim(cfg, q.cols()));
      return {ad::softmax_rows(logits), true};
    }
    case SimilarityMethod::pooled_attention: {
      ad::Var logits = ad::scale(ad::matmul_nt(q, k), inv_sqrt_dim(cfg, q.cols()));
      return {ad::softmax_rows(logits), true};
    }
    case SimilarityMethod::semantic: {
      if (proj == nullptr) throw ConfigError("semantic similarity requires a projector");
      if (proj->q_w1.rows() != q.cols()) throw DimensionError("semantic projector width does not match tokens");
      ad::Var fq = semantic_side(q, proj->q_w1, proj->q_b1, proj->q_w2);
      ad::Var fk = semantic_side(k, proj->k_w1, proj->k_b1, proj->k_w2);
      const double s = 1.0 / std::sqrt(static_cast<double>(proj->sem_dim));
      return {ad::softmax_rows(ad::scale(ad::matmul_nt(fq, fk), s)), true};
    }
    case SimilarityMethod::tome:
      throw ConfigError("tome similarity is computed by tome_sim on a single token set");
  }
  throw ConfigError("unhandled similarity method");
}

namespace {

SimilarityMatrix run_on_tape(SimilarityMethod method, const Matrix& q, const Matrix& k, const SimilarityConfig& cfg,
                             const SemanticProjector* proj) {
  cfg.validate();
  check_qk(q, k, std::string(to_string(method)).c_str());
  ad::Tape tape;
  ad::Var qv = tape.constant(q);
  ad::Var kv = tape.constant(k);
  ad::Var temp = tape.constant(Matrix(1, 1, cfg.temperature));
  std::optional<SemanticVars> sem;
  std::optional<BoundParameters> bound;
  if (method == SimilarityMethod::semantic) {
    if (proj == nullptr) throw ConfigError("semantic similarity requires a projector");
    if (proj->in_dim != q.cols()) {
      throw DimensionError("semantic projector expects width " + std::to_string(proj->in_dim) + ", got " +
                           std::to_string(q.cols()));
    }
    bound.emplace(tape, proj->params);
    sem = bind_semantic_projector(*bound, "", proj->sem_dim);
  }
  SimilarityVar out = similarity_var(method, qv, kv, temp, cfg, sem ? &*sem : nullptr);
  return {out.scores.value(), out.row_normalized, method};
}

}  // namespace

SimilarityMatrix euclidean_sim(const Matrix& q, const Matrix& k, const SimilarityConfig& cfg) {
  return run_on_tape(SimilarityMethod::euclidean, q, k, cfg, nullptr);
}

SimilarityMatrix cosine_sim(const Matrix& q, const Matrix& k, const SimilarityConfig& cfg) {
  return run_on_tape(SimilarityMethod::cosine, q, k, cfg, nullptr);
}

SimilarityMatrix attention_score_sim(const Matrix& q, const Matrix& k, const SimilarityConfig& cfg) {
  return run_on_tape(SimilarityMethod::attention_score, q, k, cfg, nullptr);
}

SimilarityMatrix pooled_attention_sim(const Matrix& q, const Matrix& k, const SimilarityConfig& cfg) {
  return run_on_tape(SimilarityMethod::pooled_attention, q, k, cfg, nullptr);
}

SimilarityMatrix semantic_sim(const Matrix& q, const Matrix& k, const SemanticProjector& proj) {
  return run_on_tape(SimilarityMethod::semantic, q, k, SimilarityConfig{}, &proj);
}

SimilarityMatrix compute_similarity(const Matrix& q, const Matrix& k, const SimilarityConfig& cfg,
                                    const SemanticProjector* proj) {
  return run_on_tape(cfg.method, q, k, cfg, proj);
}

ToMeScores tome_sim(const TokenSet& tokens, double zero_norm_eps) {
  tokens.validate();
  const std::size_t n = tokens.count();
  if (n < 2) throw MergeNotApplicable("tome_sim: need at least 2 tokens, got " + std::to_string(n));
  ToMeScores out;
  for (std::size_t i = 0; i < n; ++i) (i % 2 == 0 ? out.a : out.b).push_back(i);
  Matrix a(out.a.size(), tokens.dim());
  Matrix b(out.b.size(), tokens.dim());
  for (std::size_t i = 0; i < out.a.size(); ++i) std::copy_n(tokens.features.row(out.a[i]).begin(), tokens.dim(), a.row(i).begin());
  for (std::size_t j = 0; j < out.b.size(); ++j) std::copy_n(tokens.features.row(out.b[j]).begin(), tokens.dim(), b.row(j).begin());
  SimilarityConfig cfg;
  cfg.temperature = 1.0;
  cfg.zero_norm_eps = zero_norm_eps;
  out.cosine = cosine_sim(a, b, cfg).scores;
  out.similarity = {softmax_rows(out.cosine), true, SimilarityMethod::tome};
  return out;
}

}  // namespace pathohr
