#include "pathohr/merge/token_merge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>

#include "pathohr/error.hpp"
#include "pathohr/numeric/ops.hpp"

namespace pathohr {

std::string_view to_string(MergeMode mode) {
  return mode == MergeMode::atm ? "atm" : "tome";
}

MergeMode parse_merge_mode(std::string_view name) {
  if (name == "atm") return MergeMode::atm;
  if (name == "tome") return MergeMode::tome;
  throw ConfigError("unknown merge mode '" + std::string(name) + "'");
}

void MergeConfig::validate() const {
  if (target_tokens < 1) throw ConfigError("merge target_tokens must be >= 1");
  if (!std::isfinite(merge_threshold)) throw ConfigError("merge_threshold must be finite");
}

ad::Var threshold_weights(ad::Var scores, double threshold, bool row_normalized) {
  const Matrix& s = scores.value();
  Matrix mask(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.size(); ++i) mask.data()[i] = s.data()[i] >= threshold ? 1.0 : 0.0;
  if (row_normalized) return ad::normalize_row_sums(ad::apply_mask(scores, mask));
  return ad::masked_softmax_rows(scores, mask);
}

MergeVar atm_step(ad::Var tokens, const std::vector<int>& sizes, const std::vector<GridPos>& positions,
                  const MergeConfig& cfg, const SimilarityConfig& sim_cfg, ad::Var temperature,
                  const SemanticVars* proj, const QueryKeyFn& project) {
  const std::size_t n = tokens.rows();
  if (n < 2) throw MergeNotApplicable("atm_step: need at least 2 tokens, got " + std::to_string(n));
  ad::Tape& tape = tokens.tape();
  const Matrix pool = pooling_matrix(n);
  ad::Var pool_var = tape.constant(pool);

  auto [queries, keys] = project ? project(tokens) : std::pair{tokens, tokens};
  // Pooled attention shares one projection between queries and keys.
  if (sim_cfg.method == SimilarityMethod::pooled_attention) keys = queries;
  ad::Var pooled_queries = ad::matmul(pool_var, queries);
  SimilarityVar sim = similarity_var(sim_cfg.method, pooled_queries, keys, temperature, sim_cfg, proj);
  ad::Var weights = threshold_weights(sim.scores, cfg.merge_threshold, sim.row_normalized);

  MergeVar out;
  out.tokens = ad::matmul(weights, tokens);
  if (cfg.residual) out.tokens = ad::add(out.tokens, ad::matmul(pool_var, tokens));
  out.weights = weights.value();
  for (std::size_t i = 0; i < n; i += 2) {
    out.sizes.push_back(sizes[i] + (i + 1 < n ? sizes[i + 1] : 0));
    if (!positions.empty()) out.positions.push_back(positions[i]);
  }
  return out;
}

MergeVar tome_step(ad::Var tokens, const std::vector<int>& sizes, const std::vector<GridPos>& positions,
                   const Matrix& metric, std::size_t r, bool residual, double zero_norm_eps) {
  const std::size_t n = tokens.rows();
  if (r > n / 2) {
    throw ConfigError("tome: r = " + std::to_string(r) + " out of range for " + std::to_string(n) + " tokens");
  }
  if (metric.rows() != n) throw DimensionError("tome: metric rows do not match token count");

  // Alternate partition: even positions form A, odd positions form B.
  std::vector<std::size_t> best_b(n, 0);
  std::vector<double> best_score(n, -INFINITY);
  std::vector<double> norms(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (double v : metric.row(i)) ss += v * v;
    norms[i] = std::sqrt(ss);
  }
  std::vector<std::size_t> a_indices;
  for (std::size_t a = 0; a < n; a += 2) {
    a_indices.push_back(a);
    for (std::size_t b = 1; b < n; b += 2) {
      double cos = 0.0;
      if (norms[a] >= zero_norm_eps && norms[b] >= zero_norm_eps) {
        for (std::size_t c = 0; c < metric.cols(); ++c) cos += metric(a, c) * metric(b, c);
        cos /= norms[a] * norms[b];
      }
      if (cos > best_score[a]) {
        best_score[a] = cos;
        best_b[a] = b;
      }
    }
  }
  std::stable_sort(a_indices.begin(), a_indices.end(),
                   [&](std::size_t x, std::size_t y) { return best_score[x] > best_score[y]; });

  std::vector<char> merged_away(n, 0);
  std::vector<std::vector<std::size_t>> group(n);
  for (std::size_t i = 0; i < n; ++i) group[i].push_back(i);
  for (std::size_t k = 0; k < r; ++k) {
    const std::size_t a = a_indices[k];
    merged_away[a] = 1;
    group[best_b[a]].push_back(a);
  }

  MergeVar out;
  const std::size_t m = n - r;
  Matrix mix(m, n);
  Matrix keep(m, n);
  std::size_t row = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (merged_away[i]) continue;
    std::sort(group[i].begin(), group[i].end());
    int total = 0;
    for (std::size_t s : group[i]) total += sizes[s];
    for (std::size_t s : group[i]) mix(row, s) = static_cast<double>(sizes[s]) / total;
    keep(row, i) = 1.0;
    out.sizes.push_back(total);
    if (!positions.empty()) out.positions.push_back(positions[i]);
    ++row;
  }
  ad::Tape& tape = tokens.tape();
  out.tokens = ad::matmul(tape.constant(mix), tokens);
  if (residual) out.tokens = ad::add(out.tokens, ad::matmul(tape.constant(keep), tokens));
  out.weights = std::move(mix);
  return out;
}

std::size_t tome_pairs_for_step(std::size_t n, const MergeConfig& cfg) {
  const std::size_t excess = n > cfg.target_tokens ? n - cfg.target_tokens : 0;
  const std::size_t wanted = cfg.tome_r > 0 ? cfg.tome_r : excess;
  return std::min({wanted, excess, n / 2});
}

MergeVar merge_to_target(ad::Var tokens, std::vector<int> sizes, std::vector<GridPos> positions, const MergeConfig& cfg,
                         const SimilarityConfig& sim_cfg, ad::Var temperature, const SemanticVars* proj,
                         const QueryKeyFn& project, const MetricFn& metric) {
  cfg.validate();
  MergeVar cur{tokens, std::move(sizes), std::move(positions), Matrix::identity(tokens.rows())};
  while (cur.tokens.rows() > cfg.target_tokens && cur.tokens.rows() >= 2) {
    const std::size_t n = cur.tokens.rows();
    MergeVar next;
    if (cfg.mode == MergeMode::tome) {
      const std::size_t r = tome_pairs_for_step(n, cfg);
      if (r == 0) break;
      const Matrix m = metric ? metric(cur.tokens).value() : cur.tokens.value();
      next = tome_step(cur.tokens, cur.sizes, cur.positions, m, r, cfg.residual, sim_cfg.zero_norm_eps);
    } else {
      next = atm_step(cur.tokens, cur.sizes, cur.positions, cfg, sim_cfg, temperature, proj, project);
    }
    next.weights = matmul(next.weights, cur.weights);
    cur = std::move(next);
  }
  return cur;
}

namespace {

MergeResult to_result(const MergeVar& merged) {
  MergeResult result;
  result.tokens.features = merged.tokens.value();
  result.tokens.sizes = merged.sizes;
  result.tokens.positions = merged.positions;
  result.provenance.resize(merged.weights.rows());
  for (std::size_t i = 0; i < merged.weights.rows(); ++i)
    for (std::size_t j = 0; j < merged.weights.cols(); ++j)
      if (merged.weights(i, j) != 0.0) result.provenance[i].push_back({j, merged.weights(i, j)});
  return result;
}

}  // namespace

MergeResult atm_merge(const TokenSet& tokens, const MergeConfig& cfg, const SimilarityConfig& sim_cfg,
                      const SemanticProjector* proj) {
  tokens.validate();
  cfg.validate();
  sim_cfg.validate();
  if (tokens.count() < 2) {
    throw MergeNotApplicable("atm_merge: need at least 2 tokens, got " + std::to_string(tokens.count()));
  }
  if (sim_cfg.method == SimilarityMethod::tome) throw ConfigError("atm_merge: use tome_merge for the tome method");
  ad::Tape tape;
  ad::Var x = tape.constant(tokens.features);
  ad::Var temperature = tape.constant(Matrix(1, 1, sim_cfg.temperature));
  std::optional<BoundParameters> bound;
  std::optional<SemanticVars> sem;
  if (sim_cfg.method == SimilarityMethod::semantic) {
    if (proj == nullptr) throw ConfigError("atm_merge: semantic method requires a projector");
    bound.emplace(tape, proj->params);
    sem = bind_semantic_projector(*bound, "", proj->sem_dim);
  }
  MergeConfig atm_cfg = cfg;
  atm_cfg.mode = MergeMode::atm;
  const MergeVar merged = merge_to_target(x, tokens.sizes, tokens.positions, atm_cfg, sim_cfg, temperature,
                                          sem ? &*sem : nullptr, nullptr, nullptr);
  return to_result(merged);
}

MergeResult tome_merge(const TokenSet& tokens, std::size_t r) {
  tokens.validate();
  const std::size_t n = tokens.count();
  if (r > n / 2) {
    throw ConfigError("tome_merge: r = " + std::to_string(r) + " out of range [0, " + std::to_string(n / 2) + "]");
  }
  ad::Tape tape;
  ad::Var x = tape.constant(tokens.features);
  if (r == 0) return to_result(MergeVar{x, tokens.sizes, tokens.positions, Matrix::identity(n)});
  return to_result(tome_step(x, tokens.sizes, tokens.positions, tokens.features, r, false));
}

}  // namespace pathohr
