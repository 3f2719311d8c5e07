#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "pathohr/merge/positional.hpp"
#include "pathohr/model/config.hpp"
#include "pathohr/model/encoder_stack.hpp"
#include "pathohr/numeric/parameters.hpp"
#include "pathohr/numeric/rng.hpp"
#include "pathohr/tokens.hpp"

namespace pathohr {

/// A configuration together with its parameters; either the transformer
/// pipeline or the gated-attention baseline depending on config.model.
struct Model {
  ModelConfig config;
  ParameterSet params;

  /// Fresh parameters drawn from config.seed.
  static Model init(const ModelConfig& config);

  ad::Var logits_var(const BoundParameters& bound, const TokenSet& embeddings, FuzzMode mode, RngStream& rng,
                     ForwardDiagnostics* diagnostics = nullptr) const;

  /// Inference-mode logits (exact positional lookup).
  ForwardResult predict(const TokenSet& embeddings) const;
};

/// Positive-class score used for ranking metrics: logit[1] - logit[0].
double positive_score(const std::vector<double>& logits);
/// argmax of the logits; the lowest index wins ties.
int predicted_class(const std::vector<double>& logits);

/// One-hot target row for `label`.
Matrix one_hot(int label, std::size_t classes);

// Checkpoint container: "PHC1" | u32 json bytes | config JSON |
// u32 entry count | per entry: u32 name bytes, name, u32 rows, u32 cols,
// rows*cols f64 little-endian.
void save_checkpoint(std::ostream& out, const Model& model);
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(std::istream& in);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace pathohr
