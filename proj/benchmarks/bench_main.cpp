#include <benchmark/benchmark.h>

#include "caa/attack/comp_pgd.hpp"
#include "caa/composite/caa.hpp"
#include "caa/diffengine/ops.hpp"
#include "caa/scheduler/schedule.hpp"
#include "caa/scheduler/surrogate.hpp"
#include "caa/training/cnn.hpp"
#include "caa/training/dataset.hpp"

using namespace caa;

namespace {

const training::Dataset& data() {
  static const training::Dataset d = training::generate_synthetic_dataset(0, 16, 64);
  return d;
}

const training::CnnModel& model() {
  static const training::CnnModel m = [] {
    Rng rng(1);
    return training::CnnModel(training::init_params(3, 32, 4, rng));
  }();
  return m;
}

scheduler::ScheduleMatrix random_matrix(std::size_t n, Rng& rng) {
  scheduler::ScheduleMatrix z(n);
  for (double& v : z.values()) v = rng.uniform(0.01, 1.0);
  return z;
}

}  // namespace

static void BM_CnnForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const ad::Tensor images = data().test.head(batch).images;
  const std::vector<int> labels = data().test.head(batch).labels;
  for (auto _ : state) {
    ad::Graph g;
    const ad::NodeId x = g.parameter(images);
    const ad::NodeId loss = ad::softmax_cross_entropy(g, model().logits(g, x), labels);
    g.forward(loss);
    benchmark::DoNotOptimize(g.backward(loss));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CnnForwardBackward)->Arg(1)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_CompPgdStep(benchmark::State& state) {
  const auto kind = transforms::kAllKinds[static_cast<std::size_t>(state.range(0))];
  const ad::Tensor image = data().test.head(1).images;
  attack::AttackTarget target;
  target.labels = {data().test.labels[0]};
  Rng rng(2);
  attack::AttackComponent c = attack::make_component(kind);
  c.state = attack::init_delta(kind, c.interval, image.shape(), rng);
  attack::CompPgdConfig cfg;
  const double step = attack::step_size(c.interval, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(attack::pgd_step(c, image, model(), target, step));
  state.SetLabel(std::string(transforms::to_string(kind)));
}
BENCHMARK(BM_CompPgdStep)->DenseRange(0, 5)->Unit(benchmark::kMicrosecond);

static void BM_Sinkhorn(benchmark::State& state) {
  Rng rng(3);
  const scheduler::ScheduleMatrix z = random_matrix(static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(scheduler::sinkhorn_normalize(z));
}
BENCHMARK(BM_Sinkhorn)->DenseRange(2, 6);

static void BM_Hungarian(benchmark::State& state) {
  Rng rng(4);
  const scheduler::ScheduleMatrix z = random_matrix(static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(scheduler::hungarian_assign(z));
}
BENCHMARK(BM_Hungarian)->DenseRange(2, 8);

static void BM_BruteForceAssign(benchmark::State& state) {
  Rng rng(4);
  const scheduler::ScheduleMatrix z = random_matrix(static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(scheduler::brute_force_assign(z));
}
BENCHMARK(BM_BruteForceAssign)->DenseRange(2, 7);

static void BM_SurrogateGradient(benchmark::State& state) {
  const ad::Tensor image = data().test.head(1).images;
  attack::AttackTarget target;
  target.labels = {data().test.labels[0]};
  Rng rng(5);
  std::vector<attack::AttackComponent> pool;
  for (auto kind : transforms::kAllKinds) {
    attack::AttackComponent c = attack::make_component(kind);
    c.state = attack::init_delta(kind, c.interval, image.shape(), rng);
    pool.push_back(c);
  }
  const scheduler::ScheduleMatrix z = scheduler::init_schedule(pool.size(), rng);
  for (auto _ : state) benchmark::DoNotOptimize(scheduler::surrogate_gradient(z, pool, image, model(), target));
}
BENCHMARK(BM_SurrogateGradient)->Unit(benchmark::kMillisecond);

static void BM_CaaFullPool(benchmark::State& state) {
  const training::LabeledImages s = data().test.head(8);
  const composite::AttackPool pool = composite::AttackPool::from_kinds(transforms::kAllKinds);
  composite::CaaConfig cfg;
  cfg.mode = state.range(0) ? composite::ScheduleMode::Scheduled : composite::ScheduleMode::Random;
  cfg.comp_pgd.early_stop = false;
  for (auto _ : state) {
    Rng rng(6);
    benchmark::DoNotOptimize(composite::run_caa_batch(pool, s.images, s.labels, model(), cfg, rng));
  }
  state.SetLabel(state.range(0) ? "scheduled" : "random");
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_CaaFullPool)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
