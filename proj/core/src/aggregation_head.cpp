#include "pathohr/model/aggregation_head.hpp"

#include <string>

#include "pathohr/error.hpp"
#include "pathohr/numeric/kernels.hpp"
#include "pathohr/numeric/ops.hpp"

namespace pathohr {

namespace {
constexpr std::uint64_t kTangleInitStream = 0x74616e;
}

void add_gated_attention_params(ParameterSet& params, const std::string& prefix, std::size_t input_dim,
                                std::size_t d, std::size_t attention_dim, RngStream& rng) {
  params.add_xavier(prefix + "pre.w1", input_dim, d, rng);
  params.add_constant(prefix + "pre.b1", 1, d, 0.0);
  params.add_constant(prefix + "pre.ln.g", 1, d, 1.0);
  params.add_constant(prefix + "pre.ln.b", 1, d, 0.0);
  params.add_xavier(prefix + "pre.w2", d, d, rng);
  params.add_constant(prefix + "pre.b2", 1, d, 0.0);
  params.add_xavier(prefix + "att.wv", d, attention_dim, rng);
  params.add_constant(prefix + "att.bv", 1, attention_dim, 0.0);
  params.add_xavier(prefix + "att.wu", d, attention_dim, rng);
  params.add_constant(prefix + "att.bu", 1, attention_dim, 0.0);
  params.add_xavier(prefix + "att.w", attention_dim, 1, rng);
}

ParameterSet init_tangle_params(const ModelConfig& cfg) {
  cfg.validate();
  RngStream rng(cfg.seed, kTangleInitStream);
  ParameterSet params;
  add_gated_attention_params(params, "agg.", cfg.input_dim, cfg.d, cfg.attention_dim, rng);
  params.add_xavier("head.w", cfg.d, cfg.num_classes, rng);
  params.add_constant("head.b", 1, cfg.num_classes, 0.0);
  return params;
}

ad::Var pre_attention_var(const BoundParameters& p, const std::string& prefix, ad::Var x) {
  ad::Var h = ad::linear(x, p[prefix + "pre.w1"], p[prefix + "pre.b1"]);
  h = ad::gelu(ad::layer_norm_rows(h, p[prefix + "pre.ln.g"], p[prefix + "pre.ln.b"], kLayerNormEps));
  return ad::linear(h, p[prefix + "pre.w2"], p[prefix + "pre.b2"]);
}

ad::Var gated_attention_weights_var(const BoundParameters& p, const std::string& prefix, ad::Var features) {
  if (features.rows() == 0) throw EmptyInputError("gated attention over zero tokens");
  ad::Var a = ad::tanh(ad::linear(features, p[prefix + "att.wv"], p[prefix + "att.bv"]));
  ad::Var g = ad::sigmoid(ad::linear(features, p[prefix + "att.wu"], p[prefix + "att.bu"]));
  ad::Var scores = ad::matmul(ad::hadamard(a, g), p[prefix + "att.w"]);
  return ad::softmax_rows(ad::transpose(scores));
}

ad::Var slide_embedding_var(ad::Var features, ad::Var weights) {
  if (weights.rows() != 1 || weights.cols() != features.rows()) {
    throw DimensionError("slide embedding: " + std::to_string(weights.cols()) + " weights for " +
                         std::to_string(features.rows()) + " tokens");
  }
  return ad::matmul(weights, features);
}

ad::Var tangle_forward_var(const BoundParameters& p, const TokenSet& embeddings, const ModelConfig& cfg) {
  if (embeddings.count() == 0) throw EmptyInputError("aggregation: no patch embeddings");
  if (embeddings.dim() != cfg.input_dim) {
    throw DimensionError("aggregation: embeddings have width " + std::to_string(embeddings.dim()) +
                         ", config expects " + std::to_string(cfg.input_dim));
  }
  ad::Var x = p.tape().constant(embeddings.features);
  ad::Var h = pre_attention_var(p, "agg.", x);
  ad::Var emb = slide_embedding_var(h, gated_attention_weights_var(p, "agg.", h));
  return ad::linear(emb, p["head.w"], p["head.b"]);
}

TokenSet pre_attention(const TokenSet& features, const ParameterSet& params, const std::string& prefix) {
  features.validate();
  ad::Tape tape;
  BoundParameters bound(tape, params);
  TokenSet out = features;
  out.features = pre_attention_var(bound, prefix, tape.constant(features.features)).value();
  return out;
}

std::vector<double> gated_attention_weights(const TokenSet& features, const ParameterSet& params,
                                            const std::string& prefix) {
  if (features.count() == 0) throw EmptyInputError("gated attention over zero tokens");
  ad::Tape tape;
  BoundParameters bound(tape, params);
  const Matrix& w = gated_attention_weights_var(bound, prefix, tape.constant(features.features)).value();
  return {w.data().begin(), w.data().end()};
}

std::vector<double> slide_embedding(const TokenSet& features, std::span<const double> weights) {
  if (weights.size() != features.count()) {
    throw DimensionError("slide embedding: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(features.count()) + " tokens");
  }
  std::vector<double> out(features.dim(), 0.0);
  for (std::size_t i = 0; i < features.count(); ++i)
    for (std::size_t c = 0; c < features.dim(); ++c) out[c] += weights[i] * features.features(i, c);
  return out;
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw DimensionError("mse: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(target.size()) + " targets");
  }
  if (pred.empty()) throw EmptyInputError("mse of empty vectors");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += (pred[i] - target[i]) * (pred[i] - target[i]);
  return total / static_cast<double>(pred.size());
}

}  // namespace pathohr
