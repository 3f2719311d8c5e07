#include "pathohr/model/encoder_stack.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "pathohr/error.hpp"
#include "pathohr/merge/token_merge.hpp"
#include "pathohr/numeric/kernels.hpp"
#include "pathohr/numeric/ops.hpp"

namespace pathohr {

namespace {

constexpr std::size_t kFfnExpansion = 4;
constexpr std::uint64_t kEncoderInitStream = 0x656e63;

void add_uniform(ParameterSet& params, const std::string& name, std::size_t rows, std::size_t cols, double bound,
                 RngStream& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-bound, bound);
  params.add(name, std::move(m));
}

std::size_t head_width(std::size_t d, std::size_t heads) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("token width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  return d / heads;
}

ad::Var layer_norm_var(const BoundParameters& p, const std::string& prefix, ad::Var x) {
  return ad::layer_norm_rows(x, p[prefix + "g"], p[prefix + "b"], kLayerNormEps);
}

template <typename Fn>
TokenSet run_token_op(const TokenSet& tokens, const ParameterSet& params, Fn&& fn) {
  tokens.validate();
  ad::Tape tape;
  BoundParameters bound(tape, params);
  TokenSet out = tokens;
  out.features = fn(bound, tape.constant(tokens.features)).value();
  return out;
}

}  // namespace

void add_mqa_params(ParameterSet& params, const std::string& prefix, std::size_t d, std::size_t heads,
                    RngStream& rng) {
  const std::size_t dh = head_width(d, heads);
  params.add_xavier(prefix + "wq", d, d, rng);
  params.add_constant(prefix + "bq", 1, d, 0.0);
  params.add_xavier(prefix + "wk", d, dh, rng);
  params.add_xavier(prefix + "wv", d, dh, rng);
  params.add_constant(prefix + "bv", 1, dh, 0.0);
  params.add_xavier(prefix + "wo", d, d, rng);
  params.add_constant(prefix + "bo", 1, d, 0.0);
}

void add_layer_norm_params(ParameterSet& params, const std::string& prefix, std::size_t d) {
  params.add_constant(prefix + "g", 1, d, 1.0);
  params.add_constant(prefix + "b", 1, d, 0.0);
}

void add_encoder_block_params(ParameterSet& params, const std::string& prefix, std::size_t d, std::size_t heads,
                              RngStream& rng) {
  add_layer_norm_params(params, prefix + "ln1.", d);
  add_mqa_params(params, prefix + "mqa.", d, heads, rng);
  add_layer_norm_params(params, prefix + "ln2.", d);
  params.add_xavier(prefix + "ffn.w1", d, kFfnExpansion * d, rng);
  params.add_constant(prefix + "ffn.b1", 1, kFfnExpansion * d, 0.0);
  params.add_xavier(prefix + "ffn.w2", kFfnExpansion * d, d, rng);
  params.add_constant(prefix + "ffn.b2", 1, d, 0.0);
}

void add_projection_head_params(ParameterSet& params, const std::string& prefix, std::size_t d, RngStream& rng) {
  params.add_xavier(prefix + "q.w", d, d, rng);
  params.add_xavier(prefix + "k.w", d, d, rng);
}

ParameterSet init_encoder_params(const ModelConfig& cfg) {
  cfg.validate();
  RngStream rng(cfg.seed, kEncoderInitStream);
  ParameterSet params;
  params.add_xavier("input.w", cfg.input_dim, cfg.d, rng);
  params.add_constant("input.b", 1, cfg.d, 0.0);
  add_uniform(params, "cls", 1, cfg.d, 1.0, rng);
  add_uniform(params, "pos.table", cfg.pos_grid_rows * cfg.pos_grid_cols, cfg.d, 0.02, rng);
  add_layer_norm_params(params, "loop.ln.", cfg.d);
  add_mqa_params(params, "loop.mqa.", cfg.d, cfg.heads, rng);
  params.add_xavier("loop.lin.w", cfg.d, cfg.d, rng);
  params.add_constant("loop.lin.b", 1, cfg.d, 0.0);
  for (std::size_t b = 0; b < cfg.N; ++b)
    add_encoder_block_params(params, "block" + std::to_string(b) + ".", cfg.d, cfg.heads, rng);
  add_projection_head_params(params, "proj.", cfg.d, rng);
  params.add_constant("sim.temperature", 1, 1, cfg.temperature);
  if (cfg.method == SimilarityMethod::semantic)
    add_semantic_projector(params, "sem.", cfg.d, default_semantic_dim(cfg.d), rng);
  add_layer_norm_params(params, "head.ln.", cfg.d);
  params.add_xavier("head.w", cfg.d, cfg.num_classes, rng);
  params.add_constant("head.b", 1, cfg.num_classes, 0.0);
  return params;
}

ad::Var mqa_var(const BoundParameters& p, const std::string& prefix, ad::Var x, std::size_t heads) {
  const std::size_t d = p[prefix + "wq"].rows();
  if (x.cols() != d) {
    throw DimensionError("attention expects width " + std::to_string(d) + ", got " + std::to_string(x.cols()));
  }
  const std::size_t dh = head_width(d, heads);
  ad::Var q = ad::linear(x, p[prefix + "wq"], p[prefix + "bq"]);
  // No key bias: q_i . b is the same for every key and cancels in the softmax.
  ad::Var k = ad::matmul(x, p[prefix + "wk"]);
  ad::Var v = ad::linear(x, p[prefix + "wv"], p[prefix + "bv"]);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    ad::Var qh = ad::slice_cols(q, h * dh, dh);
    ad::Var attn = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, k), scale));
    outs.push_back(ad::matmul(attn, v));
  }
  return ad::linear(ad::concat_cols(outs), p[prefix + "wo"], p[prefix + "bo"]);
}

ad::Var encoder_block_var(const BoundParameters& p, const std::string& prefix, ad::Var x, std::size_t heads) {
  x = ad::add(x, mqa_var(p, prefix + "mqa.", layer_norm_var(p, prefix + "ln1.", x), heads));
  ad::Var hidden = ad::gelu(ad::linear(layer_norm_var(p, prefix + "ln2.", x), p[prefix + "ffn.w1"], p[prefix + "ffn.b1"]));
  return ad::add(x, ad::linear(hidden, p[prefix + "ffn.w2"], p[prefix + "ffn.b2"]));
}

std::pair<ad::Var, ad::Var> projection_head_var(const BoundParameters& p, const std::string& prefix, ad::Var x) {
  return {ad::matmul(x, p[prefix + "q.w"]), ad::matmul(x, p[prefix + "k.w"])};
}

std::vector<GridPos> clamp_positions(const std::vector<GridPos>& positions, std::size_t rows, std::size_t cols) {
  std::vector<GridPos> out = positions;
  for (GridPos& g : out) {
    g.row = std::clamp(g.row, 0, static_cast<int>(rows) - 1);
    g.col = std::clamp(g.col, 0, static_cast<int>(cols) - 1);
  }
  return out;
}

ad::Var pathohr_forward_var(const BoundParameters& p, const TokenSet& embeddings, const ModelConfig& cfg,
                            FuzzMode mode, RngStream& rng, ForwardDiagnostics* diagnostics) {
  cfg.validate();
  if (embeddings.count() == 0) throw EmptyInputError("pathohr_forward: no patch embeddings");
  embeddings.validate();
  if (embeddings.dim() != cfg.input_dim) {
    throw DimensionError("pathohr_forward: embeddings have width " + std::to_string(embeddings.dim()) +
                         ", config expects " + std::to_string(cfg.input_dim));
  }
  ad::Tape& tape = p.tape();
  const std::size_t n0 = embeddings.count();

  ad::Var x = ad::linear(tape.constant(embeddings.features), p["input.w"], p["input.b"]);
  std::vector<GridPos> positions;
  if (embeddings.has_positions()) {
    positions = clamp_positions(embeddings.positions, cfg.pos_grid_rows, cfg.pos_grid_cols);
    const FuzzMode lookup = cfg.fpe ? mode : FuzzMode::inference;
    x = ad::add(x, ad::gather_weighted(p["pos.table"],
                                       fuzzy_taps(cfg.pos_grid_rows, cfg.pos_grid_cols, positions, lookup, rng)));
  }
  std::vector<int> sizes = embeddings.sizes;
  ad::Var tokens = ad::concat_rows(p["cls"], x);

  ForwardDiagnostics diag;
  diag.patch_tokens = n0;
  diag.tokens_before_merge = n0;
  diag.tokens_after_merge = n0;

  const MergeConfig merge_cfg = cfg.effective_merge();
  const SimilarityConfig sim_cfg = cfg.similarity_config();
  std::optional<SemanticVars> sem;
  if (cfg.method == SimilarityMethod::semantic) sem = bind_semantic_projector(p, "sem.", default_semantic_dim(cfg.d));
  const QueryKeyFn project = [&](ad::Var t) { return projection_head_var(p, "proj.", t); };
  const MetricFn metric = [&](ad::Var t) { return projection_head_var(p, "proj.", t).second; };

  // The CLS row is split off so that only patch tokens take part in merging.
  auto merge = [&] {
    const std::size_t n = tokens.rows() - 1;
    if (!cfg.merge_enabled || n <= merge_cfg.target_tokens || n < 2) return;
    ad::Var cls = ad::slice_rows(tokens, 0, 1);
    MergeVar merged = merge_to_target(ad::slice_rows(tokens, 1, n), sizes, positions, merge_cfg, sim_cfg,
                                      p["sim.temperature"], sem ? &*sem : nullptr, project, metric);
    tokens = ad::concat_rows(cls, merged.tokens);
    sizes = std::move(merged.sizes);
    positions = std::move(merged.positions);
    diag.tokens_before_merge = n;
    diag.tokens_after_merge = merged.tokens.rows();
    diag.merge_applied = true;
  };
  auto count_attention = [&] {
    diag.attention_macs += count_attention_macs(tokens.rows(), cfg.d, cfg.heads);
    diag.attention_macs_unmerged += count_attention_macs(n0 + 1, cfg.d, cfg.heads);
  };

  for (std::size_t j = 0; j < cfg.J; ++j) {
    if (cfg.merge_placement == MergePlacement::per_iteration) merge();
    ad::Var norm = layer_norm_var(p, "loop.ln.", tokens);
    count_attention();
    tokens = ad::add(ad::add(tokens, mqa_var(p, "loop.mqa.", norm, cfg.heads)),
                     ad::linear(norm, p["loop.lin.w"], p["loop.lin.b"]));
    for (std::size_t b = 0; b < cfg.N; ++b) {
      count_attention();
      tokens = encoder_block_var(p, "block" + std::to_string(b) + ".", tokens, cfg.heads);
    }
  }
  if (cfg.merge_placement == MergePlacement::post_loop) merge();

  if (diagnostics) *diagnostics = diag;
  // Pre-norm stacks leave the residual stream unnormalized; the CLS row is
  // normalized once more before the prediction head.
  ad::Var cls = layer_norm_var(p, "head.ln.", ad::slice_rows(tokens, 0, 1));
  return ad::linear(cls, p["head.w"], p["head.b"]);
}

TokenSet multi_query_attention(const TokenSet& tokens, const ParameterSet& params, const std::string& prefix,
                               std::size_t heads) {
  return run_token_op(tokens, params,
                      [&](const BoundParameters& p, ad::Var x) { return mqa_var(p, prefix, x, heads); });
}

TokenSet encoder_block(const TokenSet& tokens, const ParameterSet& params, const std::string& prefix,
                       std::size_t heads) {
  return run_token_op(tokens, params,
                      [&](const BoundParameters& p, ad::Var x) { return encoder_block_var(p, prefix, x, heads); });
}

std::pair<Matrix, Matrix> projection_head(const TokenSet& tokens, const ParameterSet& params,
                                          const std::string& prefix) {
  tokens.validate();
  ad::Tape tape;
  BoundParameters bound(tape, params);
  auto [q, k] = projection_head_var(bound, prefix, tape.constant(tokens.features));
  return {q.value(), k.value()};
}

ForwardResult pathohr_forward(const TokenSet& embeddings, const ModelConfig& cfg, const ParameterSet& params,
                              RngStream& rng, FuzzMode mode) {
  ad::Tape tape;
  BoundParameters bound(tape, params);
  ForwardResult result;
  ad::Var logits = pathohr_forward_var(bound, embeddings, cfg, mode, rng, &result.diagnostics);
  result.logits.assign(logits.value().data().begin(), logits.value().data().end());
  return result;
}

AttentionMacs attention_mac_breakdown(std::size_t n, std::size_t d, std::size_t h) {
  const std::uint64_t dh = head_width(d, h);
  const std::uint64_t nn = n;
  const std::uint64_t dd = d;
  AttentionMacs m;
  m.projections = nn * dd * dd + 2 * nn * dd * dh;
  m.scores = h * nn * nn * dh;
  m.mixing = h * nn * nn * dh;
  m.output = nn * dd * dd;
  return m;
}

std::uint64_t count_attention_macs(std::size_t n, std::size_t d, std::size_t h) {
  return attention_mac_breakdown(n, d, h).total();
}

}  // namespace pathohr
