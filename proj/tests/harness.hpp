#pragma once

// Synthetic tabular task shared by the model tests and the acceptance run:
// class 1 iff speed_kph > 60, with a tire pressure column carrying no signal.

#include <random>

#include "itsgw/text/dataset.hpp"

namespace harness {

using namespace itsgw;

inline std::vector<SensorRecord> speed_records(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> slow(0, 55), fast(65, 120), tire(280, 360);
  std::vector<SensorRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool is_fast = rng() % 2;
    const double speed = is_fast ? fast(rng) : slow(rng);
    SensorRecord r{{{"speed_kph", FieldKind::numeric}, {"tire_pressure_psi", FieldKind::numeric}},
                   {speed, tire(rng) / 10.0},
                   is_fast ? 1u : 0u};
    out.push_back(std::move(r));
  }
  return out;
}

struct SpeedTask {
  text::Vocab vocab;
  std::vector<model::LabeledInput> train, eval;
  model::EncoderConfig config;
};

inline constexpr std::size_t kSpeedMaxLen = 16;

inline SpeedTask speed_task(std::uint64_t seed, std::size_t n = 1000) {
  const auto records = speed_records(n, seed);
  const std::size_t n_train = n * 4 / 5;
  const std::span<const SensorRecord> train_part(records.data(), n_train), eval_part(records.data() + n_train, n - n_train);
  SpeedTask task;
  task.vocab = text::build_vocab(text::record_corpus(train_part), 1, 512);
  task.train = text::encode_labeled(train_part, task.vocab, kSpeedMaxLen);
  task.eval = text::encode_labeled(eval_part, task.vocab, kSpeedMaxLen);
  task.config.layers = 2;
  task.config.heads = 2;
  task.config.d_model = 32;
  task.config.d_ff = 64;
  task.config.max_len = kSpeedMaxLen;
  task.config.vocab_size = task.vocab.size();
  task.config.n_classes = 2;
  task.config.seed = seed;
  return task;
}

struct SpeedRun {
  model::TrainLog log;
  double eval_accuracy = 0.0;
  model::EncoderModel model;
};

inline SpeedRun run_speed_task(std::uint64_t seed, std::size_t max_steps = 300) {
  SpeedTask task = speed_task(seed);
  SpeedRun run{{}, 0.0, model::EncoderModel(task.config)};
  model::AdamW opt(run.model.parameters(), {3e-3, 0.9, 0.999, 1e-8, 0.01});
  model::TrainOptions options;
  options.epochs = 100;
  options.batch_size = 32;
  options.max_steps = max_steps;
  options.shuffle_seed = seed;
  run.log = model::train(run.model, task.train, task.eval, options, opt);
  run.eval_accuracy = model::evaluate_accuracy(run.model, task.eval);
  return run;
}

}  // namespace harness
