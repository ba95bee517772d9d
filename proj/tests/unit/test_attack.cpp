#include <gtest/gtest.h>

#include <cmath>

#include "caa/attack/comp_pgd.hpp"
#include "caa/attack/ensemble.hpp"
#include "caa/attack/grid_search.hpp"
#include "caa/error.hpp"
#include "caa/transforms/transforms.hpp"
#include "toy_models.hpp"

using namespace caa;
using namespace caa::attack;
using ad::Tensor;
using transforms::PerturbationKind;

namespace {

Tensor flat_image(float v, std::size_t side = 4) { return Tensor({1, 3, side, side}, v); }

AttackComponent with_delta(PerturbationKind kind, float value, std::size_t n = 1) {
  AttackComponent c = make_component(kind);
  c.state.delta = Tensor({n}, value);
  return c;
}

AttackTarget label(int y) {
  AttackTarget t;
  t.labels = {y};
  return t;
}

CompPgdConfig no_early_stop(std::size_t steps = 10) {
  CompPgdConfig c;
  c.steps = steps;
  c.early_stop = false;
  return c;
}

}  // namespace

TEST(Clip, ThreeBranches) {
  const PerturbationInterval unit{0.0, 1.0};
  EXPECT_EQ(clip_interval(0.5, unit), 0.5);
  EXPECT_EQ(clip_interval(-2.0, unit), 0.0);
  EXPECT_EQ(clip_interval(7.0, unit), 1.0);
}

TEST(StepSize, ScaledWidthOverTwoT) {
  CompPgdConfig c;
  c.steps = 10;
  EXPECT_DOUBLE_EQ(step_size({-0.2, 0.2}, c), 2.5 * 0.4 / 20.0);
  c.steps = 7;
  EXPECT_DOUBLE_EQ(step_size({0.7, 1.3}, c), 2.5 * 0.6 / 14.0);
}

TEST(SignedStep, UpdatesClipsAndRejectsNan) {
  PerturbationState s{PerturbationKind::Brightness, Tensor::vector({0.0f, 0.19f, -0.1f})};
  signed_step(s, Tensor::vector({1.0f, 3.0f, 0.0f}), 0.05, {-0.2, 0.2});
  EXPECT_FLOAT_EQ(s.delta[0], 0.05f);
  EXPECT_FLOAT_EQ(s.delta[1], 0.2f);
  EXPECT_FLOAT_EQ(s.delta[2], -0.1f);
  EXPECT_THROW(signed_step(s, Tensor::vector({NAN, 0.0f, 0.0f}), 0.05, {-0.2, 0.2}), NumericError);
}

TEST(PgdStep, ZeroGradientLeavesDelta) {
  const toys::ConstantModel model({0.3f, 0.1f});
  const AttackComponent c = with_delta(PerturbationKind::Brightness, 0.07f);
  const PgdStep s = pgd_step(c, flat_image(0.5f), model, label(0), 0.05);
  EXPECT_EQ(s.state.delta, c.state.delta);
}

TEST(PgdStep, MonotoneLossReachesUpperBound) {
  // Label 0 loses confidence as the image brightens, so the gradient in
  // delta_B is positive everywhere below saturation.
  const toys::LinearModel model = toys::mean_threshold_model(48, 4.0f, 10.0f);
  for (float start : {-0.2f, -0.05f, 0.13f}) {
    const CompPgdResult r = run_comp_pgd(with_delta(PerturbationKind::Brightness, start), flat_image(0.4f), model,
                                         label(0), no_early_stop());
    EXPECT_FLOAT_EQ(r.state.delta[0], 0.2f);
  }
  const AttackComponent at_top = with_delta(PerturbationKind::Brightness, 0.2f);
  const PgdStep s = pgd_step(at_top, flat_image(0.4f), model, label(0), 0.05);
  EXPECT_FLOAT_EQ(s.state.delta[0], 0.2f);
}

TEST(CompPgd, MisclassifiedInputReturnsUnchanged) {
  const toys::ConstantModel model({0.0f, 1.0f});
  const Tensor img = flat_image(0.3f);
  CompPgdConfig c;
  const CompPgdResult r = run_comp_pgd(with_delta(PerturbationKind::Contrast, 1.2f), img, model, label(0), c);
  EXPECT_TRUE(r.success);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_EQ(r.adversarial, img);
  ASSERT_EQ(r.traces.size(), 1u);
  EXPECT_TRUE(r.traces[0].empty());
}

TEST(CompPgd, TraceHasTEntriesWithoutEarlyStop) {
  const toys::ConstantModel model({0.0f, 1.0f});
  for (std::size_t t : {1u, 7u, 10u}) {
    const CompPgdResult r = run_comp_pgd(with_delta(PerturbationKind::Hue, 0.1f), flat_image(0.3f), model, label(0),
                                         no_early_stop(t));
    ASSERT_EQ(r.traces.size(), 1u);
    EXPECT_EQ(r.traces[0].size(), t);
  }
}

TEST(CompPgd, EarlyStopWhenFlipped) {
  // Boundary at mean 0.5: starting at 0.4 the brightness attack crosses it.
  const toys::LinearModel model = toys::mean_threshold_model(48, 20.0f, 10.0f);
  CompPgdConfig c;
  const CompPgdResult r = run_comp_pgd(with_delta(PerturbationKind::Brightness, 0.0f), flat_image(0.4f), model,
                                       label(0), c);
  EXPECT_TRUE(r.success);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_LT(r.traces[0].size(), c.steps);
  EXPECT_EQ(r.predictions[0], 1);
}

TEST(CompPgd, LossUsuallyIncreasesOnToyModel) {
  Rng rng(1);
  int increased = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor w({48, 2});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    const toys::LinearModel model(w, Tensor({2}, 0.0f));
    Tensor img({1, 3, 4, 4});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(rng.uniform(0.2, 0.8));
    const PerturbationKind kind = transforms::kSemanticKinds[trial % 5];
    AttackComponent c = make_component(kind);
    c.state = init_delta(kind, c.interval, img.shape(), rng);
    const CompPgdResult r = run_comp_pgd(c, img, model, label(trial % 2), no_early_stop());
    increased += r.final_loss[0] >= r.traces[0].front();
  }
  EXPECT_GE(increased, 90);
}

TEST(CompPgd, RestartsDrawFreshAndStayInInterval) {
  Rng rng(2);
  Tensor w({48, 2});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  const toys::LinearModel model(w, Tensor({2}, 0.0f));
  Tensor img({3, 3, 4, 4});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(rng.uniform(0.2, 0.8));
  AttackComponent c = make_component(PerturbationKind::Linf);
  c.state = init_delta(c.kind, c.interval, img.shape(), rng);
  CompPgdConfig cfg = no_early_stop(5);
  cfg.restarts = 4;
  AttackTarget t;
  t.labels = {0, 1, 0};
  const CompPgdResult r = run_comp_pgd(c, img, model, t, cfg, &rng);
  EXPECT_TRUE(within(r.state, c.interval));
  ASSERT_EQ(r.restart.size(), 3u);
  for (std::size_t k : r.restart) EXPECT_LT(k, 4u);
  EXPECT_THROW(run_comp_pgd(c, img, model, t, cfg, nullptr), InvalidArgument);
}

TEST(Ensemble, SingleComponentMatchesCompPgd) {
  Rng rng(3);
  Tensor w({48, 2});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  const toys::LinearModel model(w, Tensor({2}, 0.0f));
  Tensor img({1, 3, 4, 4});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(rng.uniform(0.2, 0.8));
  const std::vector<AttackComponent> one = {with_delta(PerturbationKind::Saturation, 1.1f)};
  const std::vector<std::size_t> order = {0};
  const CompPgdConfig cfg = no_early_stop(6);
  const AttackResult e = run_ensemble_pgd(one, order, img, model, label(1), cfg);
  const CompPgdResult c = run_comp_pgd(one[0], img, model, label(1), cfg);
  ASSERT_EQ(e.traces.size(), 1u);
  EXPECT_EQ(e.traces[0].losses, c.traces[0]);
  EXPECT_EQ(e.deltas[0].delta, c.state.delta);
  EXPECT_EQ(e.adversarial, c.adversarial);
}

TEST(Ensemble, ZeroGradientKeepsEveryDelta) {
  const toys::ConstantModel model({1.0f, 0.0f});
  const std::vector<AttackComponent> comps = {with_delta(PerturbationKind::Brightness, 0.1f),
                                              with_delta(PerturbationKind::Contrast, 0.9f)};
  const std::vector<std::size_t> order = {1, 0};
  const AttackResult r = run_ensemble_pgd(comps, order, flat_image(0.5f), model, label(0), no_early_stop(4));
  EXPECT_EQ(r.deltas[0].delta, comps[0].state.delta);
  EXPECT_EQ(r.deltas[1].delta, comps[1].state.delta);
  EXPECT_THROW(check_order(std::vector<std::size_t>{0, 0}, 2), InvalidArgument);
}

TEST(GridSearch, ValuesIncludeEndpoints) {
  const std::vector<double> v = grid_values({-0.2, 0.2}, 3);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_DOUBLE_EQ(v[0], -0.2);
  EXPECT_NEAR(v[1], 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(v[2], 0.2);
  EXPECT_THROW(grid_values({0.0, 1.0}, 1), InvalidArgument);
}

TEST(GridSearch, PicksMaximalLossPoint) {
  const toys::LinearModel model = toys::mean_threshold_model(48, 4.0f, 10.0f);
  const std::vector<AttackComponent> comps = {make_component(PerturbationKind::Brightness)};
  const std::vector<std::size_t> order = {0};
  GridSearchConfig cfg;
  cfg.points = 3;
  const AttackResult r = grid_search_attack(comps, order, flat_image(0.4f), model, label(0), cfg);
  EXPECT_FLOAT_EQ(r.deltas[0].delta[0], 0.2f);
  // Reversed loss: label 1 prefers darker images.
  const AttackResult low = grid_search_attack(comps, order, flat_image(0.4f), model, label(1), cfg);
  EXPECT_FLOAT_EQ(low.deltas[0].delta[0], -0.2f);

  const std::vector<AttackComponent> two = {make_component(PerturbationKind::Brightness),
                                            make_component(PerturbationKind::Contrast)};
  const std::vector<std::size_t> bc = {0, 1};
  const AttackResult both = grid_search_attack(two, bc, flat_image(0.4f), model, label(0), cfg);
  EXPECT_FLOAT_EQ(both.deltas[0].delta[0], 0.2f);
  EXPECT_FLOAT_EQ(both.deltas[1].delta[0], 1.3f);
}

TEST(GridSearch, RejectsLinf) {
  const toys::ConstantModel model({1.0f, 0.0f});
  const std::vector<AttackComponent> comps = {make_component(PerturbationKind::Linf)};
  const std::vector<std::size_t> order = {0};
  EXPECT_THROW(grid_search_attack(comps, order, flat_image(0.4f), model, label(0), {}), InvalidArgument);
}
