#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pathohr/data/synthetic.hpp"
#include "pathohr/encoder/toy_encoder.hpp"
#include "pathohr/eval/metrics.hpp"
#include "pathohr/model/model.hpp"
#include "pathohr/patch/patches.hpp"
#include "pathohr/train/trainer.hpp"

namespace pathohr {

struct EmbeddingOptions {
  int patch_size = 16;
  std::uint64_t encoder_seed = 0;
  std::size_t hidden_dim = kDefaultEncoderHidden;
  std::size_t embedding_dim = kDefaultEmbeddingDim;
  double min_tissue_fraction = kDefaultMinTissueFraction;
  /// Z-score every embedding coordinate with statistics of the training
  /// split's patch tokens.
  bool standardize = true;
};

/// Per-coordinate affine map x -> (x - mean) * scale.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> scale;
  bool empty() const { return mean.empty(); }
};

/// Mean and 1 / sqrt(var + 1e-12) over all tokens of all slides.
FeatureStats fit_feature_stats(std::span<const TokenSet> token_sets);
void apply_feature_stats(TokenSet& tokens, const FeatureStats& stats);

/// Slides as patch-embedding token sets with labels and split membership.
struct PreparedDataset {
  std::vector<LabeledSlide> slides;
  std::vector<Split> splits;
  EmbeddingOptions options;
  /// Empty unless options.standardize; apply to any new slide embedded for
  /// models trained on this dataset.
  FeatureStats stats;

  std::vector<LabeledSlide> subset(Split split) const;
};

/// Tissue mask, patch extraction and encoding of one slide. Throws
/// EmptyInputError when no patch has enough tissue.
TokenSet embed_slide(const SlideImage& image, const PatchEncoderParams& encoder, const EmbeddingOptions& options);

PreparedDataset prepare_dataset(std::span<const SlideImage> images, std::span<const int> labels,
                                std::span<const Split> splits, const EmbeddingOptions& options);
PreparedDataset prepare_dataset(const SyntheticDataset& dataset, const EmbeddingOptions& options);

struct SlidePrediction {
  std::vector<double> logits;
  ForwardDiagnostics diagnostics;
};

std::vector<SlidePrediction> predict_all(const Model& model, std::span<const LabeledSlide> slides,
                                         std::size_t threads = 0);

/// Test metrics of a trained model (method/residual/config taken from it).
/// AUC is 0.5 when the test slides all share one label.
MetricsReport evaluate_model(const Model& model, std::span<const LabeledSlide> test, std::size_t threads = 0);

struct ExperimentResult {
  MetricsReport report;
  TrainResult training;
};

/// Trains on the train split, keeps the best validation epoch, reports on
/// the test split.
ExperimentResult run_experiment(const ModelConfig& config, const TrainConfig& train_cfg,
                                const PreparedDataset& data);

/// The 12 cells {pooled_attention, euclidean, cosine, attention_score,
/// semantic, tome} x {residual off, on}, method-major.
std::vector<ModelConfig> default_ablation_grid(const ModelConfig& base);
/// The grid restricted to the given methods, same ordering.
std::vector<ModelConfig> ablation_grid(const ModelConfig& base, std::span<const SimilarityMethod> methods);

/// One row per grid cell in grid order. Each cell trains once per seed
/// (model and training seeds both set to it) and reports the mean metrics.
/// A cell that throws is kept with `failure` set; the rest still run.
std::vector<MetricsReport> ablation_harness(const std::vector<ModelConfig>& grid, const PreparedDataset& data,
                                            const TrainConfig& train_cfg, const std::vector<std::uint64_t>& seeds);

}  // namespace pathohr
