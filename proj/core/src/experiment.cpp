#include "pathohr/eval/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pathohr/error.hpp"
#include "pathohr/parallel.hpp"

namespace pathohr {

std::vector<LabeledSlide> PreparedDataset::subset(Split split) const {
  std::vector<LabeledSlide> out;
  for (std::size_t i = 0; i < slides.size(); ++i)
    if (splits[i] == split) out.push_back(slides[i]);
  return out;
}

TokenSet embed_slide(const SlideImage& image, const PatchEncoderParams& encoder, const EmbeddingOptions& options) {
  const PatchGrid grid = slide_to_patches(image, options.patch_size, options.min_tissue_fraction);
  if (grid.patches.empty()) throw EmptyInputError("slide yields no tissue patches");
  return encode_grid(grid, encoder);
}

FeatureStats fit_feature_stats(std::span<const TokenSet> token_sets) {
  FeatureStats stats;
  std::size_t count = 0;
  for (const TokenSet& t : token_sets) {
    if (stats.mean.empty()) {
      stats.mean.assign(t.dim(), 0.0);
      stats.scale.assign(t.dim(), 0.0);
    }
    if (t.dim() != stats.mean.size()) throw DimensionError("feature stats: token widths differ");
    for (std::size_t r = 0; r < t.count(); ++r)
      for (std::size_t c = 0; c < t.dim(); ++c) stats.mean[c] += t.features(r, c);
    count += t.count();
  }
  if (count == 0) throw EmptyInputError("feature stats over zero tokens");
  for (double& m : stats.mean) m /= static_cast<double>(count);
  for (const TokenSet& t : token_sets)
    for (std::size_t r = 0; r < t.count(); ++r)
      for (std::size_t c = 0; c < t.dim(); ++c) {
        const double dev = t.features(r, c) - stats.mean[c];
        stats.scale[c] += dev * dev;
      }
  for (double& s : stats.scale) s = 1.0 / std::sqrt(s / static_cast<double>(count) + 1e-12);
  return stats;
}

void apply_feature_stats(TokenSet& tokens, const FeatureStats& stats) {
  if (stats.empty()) return;
  if (tokens.dim() != stats.mean.size()) throw DimensionError("feature stats width does not match tokens");
  for (std::size_t r = 0; r < tokens.count(); ++r)
    for (std::size_t c = 0; c < tokens.dim(); ++c)
      tokens.features(r, c) = (tokens.features(r, c) - stats.mean[c]) * stats.scale[c];
}

PreparedDataset prepare_dataset(std::span<const SlideImage> images, std::span<const int> labels,
                                std::span<const Split> splits, const EmbeddingOptions& options) {
  if (images.size() != labels.size() || images.size() != splits.size()) {
    throw DimensionError("prepare_dataset: images, labels and splits differ in length");
  }
  const PatchEncoderParams encoder =
      make_patch_encoder(options.encoder_seed, options.patch_size, options.hidden_dim, options.embedding_dim);
  PreparedDataset data;
  data.options = options;
  data.splits.assign(splits.begin(), splits.end());
  data.slides.resize(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    data.slides[i].tokens = embed_slide(images[i], encoder, options);
    data.slides[i].label = labels[i];
  });
  if (options.standardize) {
    std::vector<TokenSet> train_tokens;
    for (std::size_t i = 0; i < data.slides.size(); ++i)
      if (data.splits[i] == Split::train) train_tokens.push_back(data.slides[i].tokens);
    if (train_tokens.empty()) throw EmptyInputError("standardization needs training slides");
    data.stats = fit_feature_stats(train_tokens);
    for (LabeledSlide& s : data.slides) apply_feature_stats(s.tokens, data.stats);
  }
  return data;
}

PreparedDataset prepare_dataset(const SyntheticDataset& dataset, const EmbeddingOptions& options) {
  std::vector<SlideImage> images;
  std::vector<int> labels;
  for (const auto& s : dataset.slides) {
    images.push_back(s.image);
    labels.push_back(s.label);
  }
  return prepare_dataset(images, labels, dataset.splits, options);
}

std::vector<SlidePrediction> predict_all(const Model& model, std::span<const LabeledSlide> slides,
                                         std::size_t threads) {
  std::vector<SlidePrediction> out(slides.size());
  parallel_for(
      slides.size(),
      [&](std::size_t i) {
        ForwardResult r = model.predict(slides[i].tokens);
        out[i] = {std::move(r.logits), r.diagnostics};
      },
      threads == 0 ? thread_budget() : threads);
  return out;
}

MetricsReport evaluate_model(const Model& model, std::span<const LabeledSlide> test, std::size_t threads) {
  if (test.empty()) throw EmptyInputError("no test slides");
  const auto preds = predict_all(model, test, threads);
  std::vector<double> scores;
  std::vector<int> predicted;
  std::vector<int> labels;
  MetricsReport r;
  double mac_ratio_sum = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    scores.push_back(positive_score(preds[i].logits));
    predicted.push_back(predicted_class(preds[i].logits));
    labels.push_back(test[i].label);
    const ForwardDiagnostics& d = preds[i].diagnostics;
    mac_ratio_sum += d.attention_macs_unmerged == 0
                         ? 1.0
                         : static_cast<double>(d.attention_macs) / static_cast<double>(d.attention_macs_unmerged);
    r.mean_tokens_before_merge += static_cast<double>(d.tokens_before_merge);
    r.mean_tokens_after_merge += static_cast<double>(d.tokens_after_merge);
  }
  const double n = static_cast<double>(test.size());
  r.method = method_label(model.config);
  r.residual = model.config.residual;
  r.config = model.config;
  r.test_slides = test.size();
  r.attention_mac_ratio = mac_ratio_sum / n;
  r.mean_tokens_before_merge /= n;
  r.mean_tokens_after_merge /= n;
  // A single-class test set has no pairs to rank; report chance level.
  const bool both = std::find(labels.begin(), labels.end(), 0) != labels.end() &&
                    std::find(labels.begin(), labels.end(), 1) != labels.end();
  r.auc = both ? roc_auc(scores, labels) : 0.5;
  const ClassificationMetrics bin = classification_metrics(predicted, labels);
  const ClassificationMetrics macro = macro_classification_metrics(predicted, labels);
  r.acc = bin.acc;
  r.f1 = bin.f1;
  r.recall = bin.recall;
  r.precision = bin.precision;
  r.macro_f1 = macro.f1;
  r.macro_recall = macro.recall;
  r.macro_precision = macro.precision;
  return r;
}

ExperimentResult run_experiment(const ModelConfig& config, const TrainConfig& train_cfg,
                                const PreparedDataset& data) {
  const auto train = data.subset(Split::train);
  const auto val = data.subset(Split::val);
  const auto test = data.subset(Split::test);
  ExperimentResult result;
  result.training = train_model(config, train_cfg, train, val);
  result.report = evaluate_model(result.training.model, test, train_cfg.threads);
  result.report.seeds = {train_cfg.seed};
  return result;
}

std::vector<ModelConfig> ablation_grid(const ModelConfig& base, std::span<const SimilarityMethod> methods) {
  std::vector<ModelConfig> grid;
  for (SimilarityMethod m : methods) {
    for (bool residual : {false, true}) {
      ModelConfig c = base;
      c.model = ModelKind::pathohr;
      c.merge_enabled = true;
      c.method = m;
      c.residual = residual;
      c.merge.residual = residual;
      grid.push_back(c);
    }
  }
  return grid;
}

std::vector<ModelConfig> default_ablation_grid(const ModelConfig& base) {
  return ablation_grid(base, kAllSimilarityMethods);
}

std::vector<MetricsReport> ablation_harness(const std::vector<ModelConfig>& grid, const PreparedDataset& data,
                                            const TrainConfig& train_cfg, const std::vector<std::uint64_t>& seeds) {
  if (grid.empty()) throw ConfigError("ablation grid is empty");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  std::vector<MetricsReport> rows;
  for (const ModelConfig& cell : grid) {
    MetricsReport mean;
    mean.method = method_label(cell);
    mean.residual = cell.residual;
    mean.config = cell;
    mean.seeds = seeds;
    try {
      for (std::uint64_t seed : seeds) {
        ModelConfig cfg = cell;
        cfg.seed = seed;
        TrainConfig tc = train_cfg;
        tc.seed = seed;
        const MetricsReport r = run_experiment(cfg, tc, data).report;
        for (auto [dst, src] : {std::pair{&mean.auc, r.auc}, {&mean.acc, r.acc}, {&mean.f1, r.f1},
                                {&mean.recall, r.recall}, {&mean.precision, r.precision},
                                {&mean.macro_f1, r.macro_f1}, {&mean.macro_recall, r.macro_recall},
                                {&mean.macro_precision, r.macro_precision},
                                {&mean.mean_tokens_before_merge, r.mean_tokens_before_merge},
                                {&mean.mean_tokens_after_merge, r.mean_tokens_after_merge}})
          *dst += src / static_cast<double>(seeds.size());
        mean.test_slides = r.test_slides;
        // The MAC ratio depends only on token counts, not on training.
        mean.attention_mac_ratio = r.attention_mac_ratio;
      }
    } catch (const Error& e) {
      MetricsReport failed;
      failed.method = mean.method;
      failed.residual = mean.residual;
      failed.config = cell;
      failed.seeds = seeds;
      failed.failure = e.what();
      rows.push_back(failed);
      continue;
    }
    rows.push_back(mean);
  }
  return rows;
}

}  // namespace pathohr
