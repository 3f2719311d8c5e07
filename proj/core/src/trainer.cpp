#include "pathohr/train/trainer.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "pathohr/error.hpp"
#include "pathohr/numeric/ops.hpp"

namespace pathohr {

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kFuzzStream = 0x66757a7a;

std::size_t resolve_threads(std::size_t threads) { return threads == 0 ? thread_budget() : threads; }

}  // namespace

double batch_loss_and_gradient(const ParameterSet& params, std::size_t batch_size, const SampleLossFn& loss_of,
                               ParameterSet* gradient, std::size_t threads) {
  if (batch_size == 0) throw EmptyInputError("empty training batch");
  std::vector<double> losses(batch_size, 0.0);
  std::vector<ParameterSet> grads(gradient ? batch_size : 0);
  parallel_for(
      batch_size,
      [&](std::size_t i) {
        ad::Tape tape;
        BoundParameters bound(tape, params);
        ad::Var loss = loss_of(bound, i);
        losses[i] = loss.value()(0, 0);
        if (gradient) {
          tape.backward(loss);
          grads[i] = bound.gradients();
        }
      },
      resolve_threads(threads));

  const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(batch_size);
  if (gradient) {
    *gradient = params.zeros_like();
    const double inv = 1.0 / static_cast<double>(batch_size);
    for (const ParameterSet& g : grads) {
      for (std::size_t e = 0; e < g.size(); ++e) {
        auto dst = gradient->entries()[e].value.data();
        const auto src = g.entries()[e].value.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += inv * src[k];
      }
    }
  }
  return mean;
}

double train_step(ParameterSet& params, ParameterSet& velocity, std::size_t batch_size, const SampleLossFn& loss_of,
                  double learning_rate, double momentum, std::size_t threads) {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (velocity.size() != params.size()) throw DimensionError("velocity does not match parameters");

  ParameterSet grad;
  const double loss = batch_loss_and_gradient(params, batch_size, loss_of, &grad, threads);
  if (!std::isfinite(loss)) throw TrainingDiverged("training loss is not finite");
  for (const auto& e : grad.entries())
    if (!e.value.all_finite()) throw TrainingDiverged("gradient of '" + e.name + "' is not finite");

  for (std::size_t e = 0; e < params.size(); ++e) {
    auto p = params.entries()[e].value.data();
    auto v = velocity.entries()[e].value.data();
    const auto g = grad.entries()[e].value.data();
    if (v.size() != p.size()) throw DimensionError("velocity shape mismatch for " + params.entries()[e].name);
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = momentum * v[k] + g[k];
      p[k] -= learning_rate * v[k];
    }
  }
  return loss;
}

ad::Var slide_loss(const Model& model, const BoundParameters& bound, const LabeledSlide& slide, FuzzMode mode,
                   RngStream& rng) {
  ad::Var logits = model.logits_var(bound, slide.tokens, mode, rng);
  return ad::mse(logits, one_hot(slide.label, model.config.num_classes));
}

double evaluate_loss(const Model& model, std::span<const LabeledSlide> slides, std::size_t threads) {
  if (slides.empty()) return 0.0;
  return batch_loss_and_gradient(
      model.params, slides.size(),
      [&](const BoundParameters& bound, std::size_t i) {
        RngStream rng(model.config.seed);
        return slide_loss(model, bound, slides[i], FuzzMode::inference, rng);
      },
      nullptr, resolve_threads(threads));
}

DifferentiableFn model_loss_function(const Model& model, const LabeledSlide& slide) {
  return [model, slide](std::span<const double> flat, std::vector<double>* grad) {
    Model local = model;
    local.params.assign_flat(flat);
    ad::Tape tape;
    BoundParameters bound(tape, local.params);
    RngStream rng(local.config.seed);
    ad::Var loss = slide_loss(local, bound, slide, FuzzMode::inference, rng);
    if (grad) {
      tape.backward(loss);
      *grad = bound.gradients().flatten();
    }
    return loss.value()(0, 0);
  };
}

TrainResult train_model(const ModelConfig& config, const TrainConfig& train_cfg, std::span<const LabeledSlide> train,
                        std::span<const LabeledSlide> validation) {
  if (train.empty()) throw EmptyInputError("no training slides");
  if (train_cfg.epochs == 0) throw ConfigError("epochs must be >= 1");
  if (train_cfg.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  const std::size_t threads = resolve_threads(train_cfg.threads);

  Model model = Model::init(config);
  ParameterSet velocity = model.params.zeros_like();
  TrainResult result;
  result.model = model;
  double best_val = INFINITY;

  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream shuffle(train_cfg.seed, kShuffleStream);
    shuffle = shuffle.split(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    const RngStream epoch_fuzz = RngStream(train_cfg.seed, kFuzzStream).split(epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
      const std::size_t count = std::min(train_cfg.batch_size, order.size() - start);
      const double loss = train_step(
          model.params, velocity, count,
          [&](const BoundParameters& bound, std::size_t i) {
            const std::size_t pos = start + i;
            RngStream rng = epoch_fuzz.split(pos);
            return slide_loss(model, bound, train[order[pos]], FuzzMode::train, rng);
          },
          train_cfg.learning_rate, train_cfg.momentum, threads);
      loss_sum += loss * static_cast<double>(count);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.val_loss = validation.empty() ? rec.train_loss : evaluate_loss(model, validation, threads);
    if (!std::isfinite(rec.val_loss)) throw TrainingDiverged("validation loss is not finite");
    result.history.push_back(rec);
    if (validation.empty() || rec.val_loss < best_val) {
      best_val = rec.val_loss;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

}  // namespace pathohr
