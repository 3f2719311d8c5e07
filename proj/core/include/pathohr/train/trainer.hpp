#pragma once

#include <functional>
#include <span>
#include <vector>

#include "pathohr/model/model.hpp"
#include "pathohr/numeric/grad_check.hpp"
#include "pathohr/numeric/parameters.hpp"
#include "pathohr/parallel.hpp"

namespace pathohr {

/// Scalar loss of batch element `index`, recorded on the bound tape.
using SampleLossFn = std::function<ad::Var(const BoundParameters& bound, std::size_t index)>;

/// Mean loss over `batch_size` elements and, if `gradient` is non-null, its
/// gradient. Elements run on separate tapes in parallel; the reduction is
/// done in index order, so results do not depend on the thread count.
double batch_loss_and_gradient(const ParameterSet& params, std::size_t batch_size, const SampleLossFn& loss_of,
                               ParameterSet* gradient, std::size_t threads = thread_budget());

/// One momentum-SGD step on the batch mean loss:
///   v <- momentum * v + g,  params <- params - lr * v.
/// Returns the loss before the update. `velocity` must match `params` in
/// shape (use ParameterSet::zeros_like to start). Throws TrainingDiverged
/// when the loss or gradient is not finite, leaving params untouched.
double train_step(ParameterSet& params, ParameterSet& velocity, std::size_t batch_size, const SampleLossFn& loss_of,
                  double learning_rate, double momentum = 0.9, std::size_t threads = thread_budget());

struct LabeledSlide {
  TokenSet tokens;
  int label = 0;
};

struct TrainConfig {
  std::size_t epochs = 20;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  /// 0 uses thread_budget().
  std::size_t threads = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  /// Parameters from the epoch with the lowest validation loss (earliest on
  /// ties; the last epoch when there is no validation data).
  Model model;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
};

/// MSE between logits and the one-hot label.
ad::Var slide_loss(const Model& model, const BoundParameters& bound, const LabeledSlide& slide, FuzzMode mode,
                   RngStream& rng);

/// Mean inference-mode loss over a set of slides.
double evaluate_loss(const Model& model, std::span<const LabeledSlide> slides, std::size_t threads = 0);

/// The slide loss as a function of the flattened model parameters, for
/// gradient checking. Uses inference-mode positional lookup.
DifferentiableFn model_loss_function(const Model& model, const LabeledSlide& slide);

TrainResult train_model(const ModelConfig& config, const TrainConfig& train_cfg, std::span<const LabeledSlide> train,
                        std::span<const LabeledSlide> validation);

}  // namespace pathohr
