#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "caa/diffengine/ops.hpp"
#include "caa/error.hpp"
#include "caa/training/checkpoint.hpp"
#include "caa/training/trainer.hpp"
#include "toy_models.hpp"

using namespace caa;
using namespace caa::training;
using ad::Tensor;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("caa_training_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

ModelParams small_params(std::uint64_t seed, std::size_t classes = 4) {
  Rng rng(seed);
  return init_params(3, 8, classes, rng);
}

TrainConfig quick_config(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 32;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(Synthetic, DeterministicAndBalanced) {
  const Dataset a = generate_synthetic_dataset(3, 40, 12);
  const Dataset b = generate_synthetic_dataset(3, 40, 12);
  EXPECT_EQ(a.train.images, b.train.images);
  EXPECT_EQ(a.train.labels, b.train.labels);
  EXPECT_EQ(a.test.images, b.test.images);
  EXPECT_NE(a.train.images, generate_synthetic_dataset(4, 40, 12).train.images);
  std::vector<int> counts(4, 0);
  for (int y : a.train.labels) ++counts[y];
  for (int c : counts) EXPECT_EQ(c, 10);
  EXPECT_EQ(a.train.images.shape(), (ad::Shape{40, 3, 32, 32}));
  EXPECT_EQ(a.num_classes, 4u);
  EXPECT_NO_THROW(a.validate());
  for (float v : a.train.images.data()) {
    // Every pixel is an exact multiple of 1/255, like decoded CIFAR bytes.
    const float byte = std::round(v * 255.0f);
    EXPECT_EQ(byte / 255.0f, v);
  }
}

TEST(Cifar, HandBuiltRecordsRoundTrip) {
  std::string bytes;
  for (int rec = 0; rec < 2; ++rec) {
    bytes.push_back(static_cast<char>(rec == 0 ? 7 : 2));
    for (int i = 0; i < 3072; ++i) bytes.push_back(static_cast<char>((i * 13 + rec * 101) % 256));
  }
  const fs::path file = temp_path("fixture.bin");
  write_bytes(file, bytes);
  const LabeledImages d = read_cifar10_batch(file);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.labels, (std::vector<int>{7, 2}));
  for (int rec = 0; rec < 2; ++rec) {
    for (int i = 0; i < 3072; ++i) {
      const int b = (i * 13 + rec * 101) % 256;
      // Layout: 1024 R then 1024 G then 1024 B, row-major, equals [C, H, W].
      ASSERT_EQ(d.images[rec * 3072 + i], static_cast<float>(b) / 255.0f);
    }
  }
  const fs::path again = temp_path("fixture_again.bin");
  write_cifar10_batch(d, again);
  EXPECT_EQ(read_bytes(again), bytes);
}

TEST(Cifar, RejectsMalformedFiles) {
  const fs::path file = temp_path("short.bin");
  write_bytes(file, std::string(3000, '\0'));
  EXPECT_THROW(read_cifar10_batch(file), FormatError);
  std::string bad(3073, '\0');
  bad[0] = 11;
  write_bytes(file, bad);
  EXPECT_THROW(read_cifar10_batch(file), FormatError);
  EXPECT_THROW(read_cifar10_batch(temp_path("missing.bin")), IoError);
  EXPECT_THROW(load_cifar10(temp_path("no_such_dir")), IoError);
}

TEST(Cnn, ZeroImageAndBiasesGiveUniformLogits) {
  ModelParams p = small_params(1);
  for (std::size_t k = 0; k < p.names.size(); ++k) {
    if (p.names[k].ends_with(".bias")) p.tensors[k].fill(0.0f);
  }
  const CnnModel model(p);
  const Tensor logits = attack::eval_logits(model, Tensor({2, 3, 8, 8}, 0.0f));
  for (float v : logits.data()) EXPECT_EQ(v, logits[0]);
}

TEST(Cnn, ParameterGradientsMatchFiniteDifferences) {
  const ModelParams p = small_params(2);
  const Dataset d = generate_synthetic_dataset(1, 4, 4);
  Tensor images({4, 3, 8, 8});
  for (std::size_t i = 0; i < images.size(); ++i) images[i] = d.train.images[i * 16 % d.train.images.size()];
  const std::vector<int> labels = {0, 1, 2, 3};
  auto loss_with = [&](std::size_t which, const Tensor& value) {
    ad::Graph g;
    std::vector<ad::NodeId> nodes;
    for (std::size_t k = 0; k < p.tensors.size(); ++k) nodes.push_back(g.parameter(k == which ? value : p.tensors[k]));
    const ad::NodeId loss = ad::softmax_cross_entropy(g, cnn_logits(g, g.constant(images), nodes, p), labels);
    g.forward(loss);
    return std::make_pair(static_cast<double>(g.value(loss).item()), g.backward(loss).at(nodes[which]));
  };
  Rng rng(3);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t which = rng.below(p.tensors.size());
    const std::size_t idx = rng.below(p.tensors[which].size());
    const auto [base, grad] = loss_with(which, p.tensors[which]);
    Tensor up = p.tensors[which], down = p.tensors[which];
    const double h = 2e-3;
    up[idx] += static_cast<float>(h);
    down[idx] -= static_cast<float>(h);
    const double fwd = (loss_with(which, up).first - base) / h;
    const double bwd = (base - loss_with(which, down).first) / h;
    // Biases shift whole channels, so a step can cross a ReLU or pooling kink.
    if (std::abs(fwd - bwd) > 2e-3) continue;
    ++checked;
    const double numeric = 0.5 * (fwd + bwd);
    EXPECT_NEAR(grad[idx], numeric, 1e-2 * std::abs(numeric) + 1e-3) << p.names[which] << "[" << idx << "]";
  }
  EXPECT_GE(checked, 20);
}

TEST(Cnn, InitialLossNearChance) {
  const Dataset d = generate_synthetic_dataset(2, 64, 4);
  Rng rng(4);
  const CnnModel model(init_params(3, 32, 4, rng));
  attack::AttackTarget t;
  t.labels = d.train.labels;
  double mean = 0.0;
  for (double v : attack::attack_loss_rows(attack::eval_logits(model, d.train.images), t)) mean += v / 64.0;
  EXPECT_NEAR(mean, std::log(4.0), 0.5);
}

TEST(Cnn, CompatibilityChecks) {
  const ModelParams p = small_params(3);
  EXPECT_NO_THROW(check_compatible(p, 3, 8, 4));
  EXPECT_THROW(check_compatible(p, 3, 8, 10), InvalidArgument);
  EXPECT_THROW(check_compatible(p, 3, 16, 4), InvalidArgument);
  Rng rng(1);
  EXPECT_THROW(init_params(3, 10, 4, rng), InvalidArgument);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  ModelParams p = small_params(4);
  p.metadata["regime"] = "standard";
  const fs::path file = temp_path("model.ckpt");
  save_checkpoint(p, file);
  EXPECT_EQ(load_checkpoint(file), p);
  EXPECT_FALSE(fs::exists(file.string() + ".tmp"));
  const std::string first = read_bytes(file);
  save_checkpoint(p, file);
  EXPECT_EQ(read_bytes(file), first);
}

TEST(Checkpoint, CorruptionIsRejected) {
  const ModelParams p = small_params(5);
  const fs::path file = temp_path("corrupt.ckpt");
  save_checkpoint(p, file);
  const std::string good = read_bytes(file);

  std::string flipped = good;
  flipped[flipped.size() - 3] ^= 0x40;
  write_bytes(file, flipped);
  EXPECT_THROW(load_checkpoint(file), FormatError);

  write_bytes(file, good.substr(0, good.size() - 8));
  EXPECT_THROW(load_checkpoint(file), FormatError);

  std::string magic = good;
  magic[0] = 'X';
  write_bytes(file, magic);
  EXPECT_THROW(load_checkpoint(file), FormatError);

  // Rewrite the manifest with a foreign architecture hash.
  std::uint64_t len = 0;
  std::memcpy(&len, good.data() + 8, 8);
  nlohmann::ordered_json m = nlohmann::ordered_json::parse(good.substr(16, len));
  m["architecture_hash"] = "0123456789abcdef";
  const std::string manifest = m.dump();
  std::string tampered = good.substr(0, 8);
  const std::uint64_t new_len = manifest.size();
  tampered.append(reinterpret_cast<const char*>(&new_len), 8);
  tampered += manifest;
  tampered += good.substr(16 + len);
  write_bytes(file, tampered);
  try {
    load_checkpoint(file);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("architecture"), std::string::npos);
  }
  EXPECT_THROW(load_checkpoint(temp_path("absent.ckpt")), IoError);
}

TEST(Schedule, WarmupAndDecay) {
  TrainConfig c;
  c.learning_rate = 0.1;
  c.warmup_epochs = 4;
  c.epochs = 10;
  for (std::size_t e = 0; e < 4; ++e) EXPECT_EQ(learning_rate_at(c, e), 0.1 * static_cast<double>(e + 1) / 4.0);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 4), 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 6), 0.1 * 0.9 * 0.9);
  c.warmup_epochs = 11;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Training, ZeroEpochsReturnInitial) {
  const Dataset d = generate_synthetic_dataset(1, 16, 8);
  TrainConfig c = quick_config(0);
  c.warmup_epochs = 0;
  Rng rng(9);
  c.initial = init_params(3, 32, 4, rng);
  const TrainResult r = train_standard(d, c);
  EXPECT_EQ(r.params, *c.initial);
  EXPECT_EQ(r.best_epoch, 0u);
  EXPECT_TRUE(r.history.empty());
}

TEST(Training, ReproducibleAndDegenerateRegimes) {
  const Dataset d = generate_synthetic_dataset(2, 96, 32);
  const TrainResult a = train_standard(d, quick_config(2));
  const TrainResult b = train_standard(d, quick_config(2));
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.history.size(), 2u);
  EXPECT_TRUE(a.params.all_finite());

  // No attack pool: GAT is standard training.
  EXPECT_EQ(train_gat(d, quick_config(2)).params, a.params);

  // beta = 0 removes the adversarial term.
  TrainConfig t = quick_config(2);
  t.trades_beta = 0.0;
  t.pool = {attack::make_component(transforms::PerturbationKind::Brightness)};
  EXPECT_EQ(train_trades(d, t).params, a.params);
}

TEST(Training, FineTuneStartsFromCheckpoint) {
  const Dataset d = generate_synthetic_dataset(3, 64, 16);
  const TrainResult base = train_standard(d, quick_config(1));
  const fs::path file = temp_path("base.ckpt");
  save_checkpoint(base.params, file);
  TrainConfig c = quick_config(1);
  c.initial = load_checkpoint(file);
  c.learning_rate = 1e-9;
  const TrainResult tuned = train_standard(d, c);
  for (std::size_t k = 0; k < base.params.tensors.size(); ++k) {
    for (std::size_t i = 0; i < base.params.tensors[k].size(); ++i) {
      ASSERT_NEAR(tuned.params.tensors[k][i], base.params.tensors[k][i], 1e-5);
    }
  }
  TrainConfig wrong = quick_config(1);
  wrong.initial = small_params(1);
  EXPECT_THROW(train_standard(d, wrong), InvalidArgument);
}

TEST(Training, AdversarialRegimesRunAndStayFinite) {
  const Dataset d = generate_synthetic_dataset(4, 64, 16);
  TrainConfig c = quick_config(1);
  c.pool = {attack::make_component(transforms::PerturbationKind::Hue),
            attack::make_component(transforms::PerturbationKind::Linf)};
  c.caa.iterations = 2;
  c.caa.comp_pgd.steps = 2;
  const TrainResult gat = train_gat(d, c);
  EXPECT_TRUE(gat.params.all_finite());
  const TrainResult trades = train_trades(d, c);
  EXPECT_TRUE(trades.params.all_finite());
  EXPECT_NE(gat.params, trades.params);
}

TEST(Training, StandardReachesHighCleanAccuracy) {
  const Dataset d = generate_synthetic_dataset(0, 4000, 1000);
  TrainConfig c;
  c.epochs = 6;
  const TrainResult r = train_standard(d, c);
  EXPECT_GE(r.best_accuracy, 0.95);
}

TEST(Rsp, ReproducibleAndBounded) {
  const Dataset d = generate_synthetic_dataset(5, 12, 4);
  EXPECT_EQ(generate_rsp_dataset(d, {}, 1).train.images, d.train.images);
  const std::vector<attack::AttackComponent> pool = {attack::make_component(transforms::PerturbationKind::Hue),
                                                     attack::make_component(transforms::PerturbationKind::Rotation)};
  const Dataset a = generate_rsp_dataset(d, pool, 7);
  const Dataset b = generate_rsp_dataset(d, pool, 7);
  EXPECT_EQ(a.train.images, b.train.images);
  EXPECT_EQ(a.train.labels, d.train.labels);
  EXPECT_EQ(a.test.images, d.test.images);
  EXPECT_NE(a.train.images, d.train.images);
  for (float v : a.train.images.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  const std::vector<attack::AttackComponent> linf = {attack::make_component(transforms::PerturbationKind::Linf)};
  EXPECT_THROW(generate_rsp_dataset(d, linf, 7), InvalidArgument);
}
