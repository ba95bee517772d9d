#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "caa/composite/caa.hpp"
#include "caa/training/cnn.hpp"
#include "caa/training/dataset.hpp"

namespace caa::training {

enum class TrainLoss { Madry, Trades };

struct EpochLog {
  std::size_t epoch = 0;        // 1-based
  double learning_rate = 0.0;
  double train_loss = 0.0;      // mean over batches
  double test_accuracy = 0.0;   // clean
  double seconds = 0.0;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  std::size_t warmup_epochs = 1;      // linear ramp base * (e + 1) / W for e < W
  double lr_decay = 0.9;              // per epoch after warm-up
  double momentum = 0.9;
  double weight_decay = 5e-4;
  TrainLoss loss = TrainLoss::Madry;
  double trades_beta = 6.0;
  std::uint64_t seed = 0;
  std::optional<ModelParams> initial;               // fine-tune from these when set
  std::vector<attack::AttackComponent> pool;        // empty: train on clean inputs
  composite::CaaConfig caa = default_training_caa();
  std::size_t eval_samples = 0;                     // test images for model selection; 0 = all
  std::function<void(const EpochLog&)> on_epoch;

  void validate() const;
  // Scheduled order, M = 5, T = 7, training mode.
  static composite::CaaConfig default_training_caa();
};

struct TrainResult {
  ModelParams params;           // best clean test accuracy over epochs
  std::vector<EpochLog> history;
  std::size_t best_epoch = 0;   // 0 when no epoch ran
  double best_accuracy = 0.0;
};

// Learning rate used during 0-based epoch `epoch`.
double learning_rate_at(const TrainConfig& config, std::size_t epoch);

// Clean accuracy, evaluated in chunks of `batch`.
double accuracy(const attack::Model& model, const LabeledImages& data, std::size_t batch = 256);

// Minibatch SGD on clean inputs (the pool is ignored).
TrainResult train_standard(const Dataset& data, TrainConfig config);
// Inner training-mode CAA over config.pool, outer step on CE(F(x_adv), y).
TrainResult train_gat(const Dataset& data, TrainConfig config);
// CE(F(x), y) + beta * KL(F(x) || F(x_adv)); the inner CAA maximizes the KL term.
TrainResult train_trades(const Dataset& data, TrainConfig config);

}  // namespace caa::training
