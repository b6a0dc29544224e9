#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "itsgw/model/adamw.hpp"
#include "itsgw/model/encoder.hpp"

namespace itsgw::model {

struct LabeledInput {
  ModelInput input;
  std::size_t label = 0;
};

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t max_steps = 0;  // 0 = no cap
  std::uint64_t shuffle_seed = 0;
};

struct TrainLog {
  std::vector<double> step_loss;
  std::vector<double> epoch_mean_loss;
  std::vector<double> epoch_eval_accuracy;
};

/// Fraction of items whose argmax logit (lowest index on ties) equals the label.
inline double evaluate_accuracy(const EncoderModel& model, std::span<const LabeledInput> data) {
  if (data.empty()) fail(errc::empty_dataset, "no items to evaluate");
  std::size_t correct = 0;
  for (const auto& item : data) correct += argmax(forward_classify(model, item.input)) == item.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Mini-batch training with a seeded per-epoch permutation. Each step averages
/// cross-entropy over the batch and applies one optimizer update. Accuracy is
/// measured on `eval_set` after each epoch (on `train_set` if it is empty).
inline TrainLog train(EncoderModel& model, std::span<const LabeledInput> train_set, std::span<const LabeledInput> eval_set,
                      const TrainOptions& options, AdamW& optimizer) {
  if (train_set.empty()) fail(errc::empty_dataset, "training set is empty");
  if (options.batch_size == 0) fail(errc::invalid_argument, "batch size must be at least 1");
  const std::size_t classes = model.config().n_classes;
  for (const auto& item : train_set)
    if (item.label >= classes) fail(errc::label_out_of_range, "training label " + std::to_string(item.label) + " >= " + std::to_string(classes));

  const ParamList params = model.parameters();
  std::mt19937_64 rng(options.shuffle_seed);
  std::vector<std::size_t> order(train_set.size());
  TrainLog log;
  std::size_t steps = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    if (options.max_steps && steps >= options.max_steps) break;
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      if (options.max_steps && steps >= options.max_steps) break;
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      nn::zero_grads(params);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& item = train_set[order[i]];
        const Tensor2D logits = model.forward(item.input);
        auto ce = nn::cross_entropy(logits, std::span<const std::size_t>(&item.label, 1));
        for (auto& g : ce.grad.data()) g *= inv_batch;
        model.backward(ce.grad);
        batch_loss += ce.loss * inv_batch;
      }
      if (!std::isfinite(batch_loss)) fail(errc::non_finite_value, "training loss became non-finite at step " + std::to_string(steps));
      optimizer.step(params);
      log.step_loss.push_back(batch_loss);
      epoch_loss += batch_loss;
      ++epoch_steps;
      ++steps;
    }
    if (epoch_steps == 0) break;
    log.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_steps));
    log.epoch_eval_accuracy.push_back(evaluate_accuracy(model, eval_set.empty() ? train_set : eval_set));
  }
  return log;
}

}  // namespace itsgw::model
