#include "caa/training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "caa/diffengine/ops.hpp"
#include "caa/error.hpp"

namespace caa::training {

composite::CaaConfig TrainConfig::default_training_caa() {
  composite::CaaConfig c;
  c.mode = composite::ScheduleMode::Scheduled;
  c.iterations = 5;
  c.comp_pgd.steps = 7;
  c.comp_pgd.early_stop = false;
  c.training_mode = true;
  return c;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (warmup_epochs > epochs) throw InvalidArgument("warm-up epochs exceed total epochs");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw InvalidArgument("lr decay must be in (0, 1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight decay must be nonnegative");
  if (loss == TrainLoss::Trades && !(trades_beta >= 0.0)) throw InvalidArgument("TRADES beta must be nonnegative");
  if (!pool.empty()) {
    composite::AttackPool check(pool);
    caa.validate(check.size());
  }
}

double learning_rate_at(const TrainConfig& config, std::size_t epoch) {
  if (epoch < config.warmup_epochs) {
    return config.learning_rate * static_cast<double>(epoch + 1) / static_cast<double>(config.warmup_epochs);
  }
  return config.learning_rate * std::pow(config.lr_decay, static_cast<double>(epoch - config.warmup_epochs));
}

double accuracy(const attack::Model& model, const LabeledImages& data, std::size_t batch) {
  if (data.size() == 0) throw InvalidArgument("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::size_t m = std::min(batch, data.size() - start);
    const std::vector<int> pred = attack::predict(model, data.images.slice_rows(start, m));
    for (std::size_t i = 0; i < m; ++i) correct += pred[i] == data.labels[start + i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

enum class Regime { Standard, Gat, Trades };

struct Sgd {
  std::vector<ad::Tensor> velocity;

  void step(ModelParams& p, const std::vector<ad::Tensor>& grads, double lr, const TrainConfig& cfg) {
    if (velocity.empty()) {
      for (const ad::Tensor& t : p.tensors) velocity.emplace_back(t.shape(), 0.0f);
    }
    for (std::size_t k = 0; k < p.tensors.size(); ++k) {
      ad::Tensor& w = p.tensors[k];
      ad::Tensor& v = velocity[k];
      const ad::Tensor& g = grads[k];
      const float mu = static_cast<float>(cfg.momentum), wd = static_cast<float>(cfg.weight_decay);
      const float rate = static_cast<float>(lr);
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = mu * v[i] + (g[i] + wd * w[i]);
        w[i] -= rate * v[i];
      }
    }
  }
};

TrainResult train(const Dataset& data, TrainConfig config, Regime regime) {
  config.validate();
  if (data.train.size() == 0 || data.test.size() == 0) throw InvalidArgument("training needs nonempty splits");
  config.caa.training_mode = true;
  config.caa.comp_pgd.early_stop = false;

  const std::size_t channels = data.channels(), side = data.side();
  ModelParams params;
  if (config.initial) {
    check_compatible(*config.initial, channels, side, data.num_classes);
    params = *config.initial;
  } else {
    Rng init_rng = Rng::stream(config.seed, 2);
    params = init_params(channels, side, data.num_classes, init_rng);
  }

  const bool attacked = regime != Regime::Standard && !config.pool.empty() &&
                        !(regime == Regime::Trades && config.trades_beta == 0.0);
  std::optional<composite::AttackPool> pool;
  if (attacked) pool.emplace(config.pool);

  const LabeledImages eval_set =
      config.eval_samples == 0 ? data.test : data.test.head(std::min(config.eval_samples, data.test.size()));

  Rng order_rng = Rng::stream(config.seed, 0);
  Rng attack_rng = Rng::stream(config.seed, 1);
  Sgd sgd;
  TrainResult result;
  result.params = params;
  double best = -1.0;

  std::vector<std::size_t> perm(data.train.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = learning_rate_at(config, epoch);
    order_rng.shuffle(std::span<std::size_t>(perm));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < perm.size(); start += config.batch_size) {
      const std::size_t m = std::min(config.batch_size, perm.size() - start);
      const LabeledImages batch = data.train.subset(std::span<const std::size_t>(perm).subspan(start, m));

      ad::Tensor adversarial;
      attack::AttackTarget target;
      target.labels = batch.labels;
      if (attacked) {
        const CnnModel current(params);
        if (regime == Regime::Trades) target.reference_logits = attack::eval_logits(current, batch.images);
        adversarial = composite::run_caa_training(*pool, batch.images, target, current, config.caa, attack_rng).adversarial;
      }

      ad::Graph g;
      std::vector<ad::NodeId> nodes;
      for (std::size_t k = 0; k < params.tensors.size(); ++k) nodes.push_back(g.parameter(params.tensors[k], params.names[k]));
      ad::NodeId loss;
      if (regime == Regime::Gat && attacked) {
        const ad::NodeId logits = cnn_logits(g, g.constant(std::move(adversarial)), nodes, params);
        loss = ad::softmax_cross_entropy(g, logits, batch.labels);
      } else {
        const ad::NodeId clean = cnn_logits(g, g.constant(batch.images), nodes, params);
        loss = ad::softmax_cross_entropy(g, clean, batch.labels);
        if (regime == Regime::Trades && attacked) {
          const ad::NodeId adv = cnn_logits(g, g.constant(std::move(adversarial)), nodes, params);
          const ad::NodeId kl = ad::softmax_kl(g, clean, adv);
          loss = ad::add(g, loss, ad::mul_scalar(g, kl, static_cast<float>(config.trades_beta)));
        }
      }
      const double value = g.forward(loss).item();
      if (!std::isfinite(value)) {
        throw NumericError("training diverged: loss " + std::to_string(value) + " at epoch " +
                           std::to_string(epoch + 1) + ", batch " + std::to_string(batches + 1) + ", lr " +
                           std::to_string(lr));
      }
      const ad::GradientMap gm = g.backward(loss);
      std::vector<ad::Tensor> grads;
      for (ad::NodeId id : nodes) grads.push_back(gm.at(id));
      sgd.step(params, grads, lr, config);
      if (!params.all_finite()) {
        throw NumericError("training diverged: non-finite parameters after epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(batches + 1));
      }
      loss_sum += value;
      ++batches;
    }

    EpochLog log;
    log.epoch = epoch + 1;
    log.learning_rate = lr;
    log.train_loss = loss_sum / static_cast<double>(batches);
    log.test_accuracy = accuracy(CnnModel(params), eval_set);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(log);
    if (config.on_epoch) config.on_epoch(log);
    if (log.test_accuracy > best) {
      best = log.test_accuracy;
      result.params = params;
      result.best_epoch = epoch + 1;
      result.best_accuracy = log.test_accuracy;
    }
  }
  if (result.best_epoch == 0) result.best_accuracy = accuracy(CnnModel(result.params), eval_set);
  return result;
}

}  // namespace

TrainResult train_standard(const Dataset& data, TrainConfig config) {
  config.pool.clear();
  return train(data, std::move(config), Regime::Standard);
}

TrainResult train_gat(const Dataset& data, TrainConfig config) {
  config.loss = TrainLoss::Madry;
  return train(data, std::move(config), Regime::Gat);
}

TrainResult train_trades(const Dataset& data, TrainConfig config) {
  config.loss = TrainLoss::Trades;
  return train(data, std::move(config), Regime::Trades);
}

}  // namespace caa::training
