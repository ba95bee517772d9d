#include <gtest/gtest.h>

#include <unistd.h>

#include <algorithm>
#include <clocale>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "caa/error.hpp"
#include "caa/eval/config.hpp"
#include "caa/eval/metrics.hpp"
#include "caa/eval/report.hpp"
#include "caa/eval/stats.hpp"
#include "caa/eval/sweep.hpp"
#include "toy_models.hpp"

using namespace caa;
using namespace caa::eval;
using transforms::PerturbationKind;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("caa_eval_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

attack::AttackResult outcome(bool clean_correct, int prediction) {
  attack::AttackResult r;
  r.clean_correct = clean_correct;
  r.prediction = prediction;
  r.success = prediction != 0;
  return r;
}

// One small standard model shared by the tests that need a real classifier.
struct Fixture {
  training::Dataset data = training::generate_synthetic_dataset(0, 1000, 200);
  training::CnnModel model = [this] {
    training::TrainConfig c;
    c.epochs = 3;
    return training::CnnModel(training::train_standard(data, c).params);
  }();
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST(Metrics, CountsAndIdentity) {
  // Labels are all 0. Clean-correct samples: 0, 1, 2; sample 1 and 2 get flipped.
  const std::vector<attack::AttackResult> rs = {outcome(true, 0), outcome(true, 1), outcome(true, 2),
                                                outcome(false, 3), outcome(false, 1)};
  const std::vector<int> labels(5, 0);
  const SuiteMetrics m = summarize("s", "random", rs, labels, 9);
  EXPECT_EQ(m.n, 5u);
  EXPECT_EQ(m.clean_correct, 3u);
  EXPECT_EQ(m.robust_correct, 1u);
  EXPECT_EQ(m.flipped, 2u);
  EXPECT_DOUBLE_EQ(m.clean_acc, 0.6);
  EXPECT_DOUBLE_EQ(m.ra, 0.2);
  EXPECT_DOUBLE_EQ(m.asr, 2.0 / 3.0);
  EXPECT_TRUE(m.identity_holds());
  EXPECT_EQ(m.seed, 9u);
}

TEST(Stats, MatchesReferenceValues) {
  // Reference from an independent paired t-test implementation.
  const std::vector<double> a = {0.5, 0.6, 0.55, 0.7, 0.65, 0.62};
  const std::vector<double> b = {0.45, 0.58, 0.5, 0.6, 0.66, 0.57};
  const PairedTest t = paired_comparison_test(a, b);
  EXPECT_NEAR(t.t_statistic, 2.892462036684902, 1e-9);
  EXPECT_NEAR(t.p_value, 0.03408880814779499, 1e-9);
  EXPECT_NEAR(t.mean_difference, 0.26 / 6.0, 1e-12);
  EXPECT_EQ(t.pairs, 6u);
  EXPECT_FALSE(t.degenerate);
}

TEST(Stats, DegenerateCases) {
  const std::vector<double> a = {0.1, 0.2, 0.3, 0.4, 0.5};
  const PairedTest same = paired_comparison_test(a, a);
  EXPECT_EQ(same.mean_difference, 0.0);
  EXPECT_EQ(same.p_value, 1.0);
  EXPECT_TRUE(same.degenerate);
  // Dyadic values keep the shifted differences exactly equal.
  const std::vector<double> base = {0.125, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> shifted = base;
  for (double& v : shifted) v += 0.25;
  const PairedTest c = paired_comparison_test(shifted, base);
  EXPECT_NEAR(c.mean_difference, 0.25, 1e-12);
  EXPECT_EQ(c.p_value, 0.0);
  EXPECT_TRUE(c.degenerate);
  EXPECT_THROW(paired_comparison_test(std::vector<double>{1, 2}, std::vector<double>{1, 2}), InvalidArgument);
  EXPECT_THROW(paired_comparison_test(a, std::vector<double>{1, 2, 3, 4}), InvalidArgument);
}

TEST(Report, CsvFormat) {
  MetricsReport r;
  EXPECT_EQ(report_csv(r), "suite,order_mode,clean_acc,ra,asr,n,seed\n");
  r.suites.push_back({"caa3a", "scheduled", 3, 3, 1, 2, 1.0, 1.0 / 3.0, 2.0 / 3.0, 17});
  std::setlocale(LC_NUMERIC, "de_DE.UTF-8");  // decimal comma, if installed
  EXPECT_EQ(report_csv(r), "suite,order_mode,clean_acc,ra,asr,n,seed\ncaa3a,scheduled,1,0.333333,0.666667,3,17\n");
  std::setlocale(LC_NUMERIC, "C");
  EXPECT_EQ(format_number(1234567.0), "1.23457e+06");
  EXPECT_EQ(format_number(0.1), "0.1");
}

TEST(Report, JsonRoundTrip) {
  MetricsReport r;
  r.clean_accuracy = 0.935;
  r.n = 200;
  r.seed = 4;
  r.config_json = R"({"seed":4})";
  r.suites.push_back({"full", "random", 200, 187, 30, 157, 0.935, 0.15, 157.0 / 187.0, 4});
  const fs::path p = temp_path("report.json");
  write_report(r, p, ReportFormat::Json);
  EXPECT_EQ(read_report_json(p), r);
  write_report(r, temp_path("report.csv"), ReportFormat::Csv);
  EXPECT_EQ(slurp(temp_path("report.csv")), report_csv(r));
  EXPECT_THROW(parse_report_format("xml"), InvalidArgument);
  EXPECT_THROW(write_report(r, temp_path("no/such/dir/r.csv"), ReportFormat::Csv), IoError);
}

TEST(Config, ParsesAndRejectsUnknownKeys) {
  const ToolConfig c = parse_config(R"({"seed": 3, "dataset": {"n_train": 10},
      "intervals": {"brightness": [-0.1, 0.1], "linf": 0.01},
      "attack": {"kinds": ["hue", "linf"], "order": "random", "steps": 4},
      "eval": {"suites": ["identity"], "samples": 5}})");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.n_train, 10u);
  EXPECT_EQ(c.suite_options().interval(PerturbationKind::Brightness), (transforms::PerturbationInterval{-0.1, 0.1}));
  EXPECT_EQ(c.suite_options().interval(PerturbationKind::Linf), (transforms::PerturbationInterval{-0.01, 0.01}));
  EXPECT_EQ(c.attack_pool().size(), 2u);
  EXPECT_EQ(c.attack_caa().mode, composite::ScheduleMode::Random);
  EXPECT_EQ(c.attack_caa().comp_pgd.steps, 4u);
  EXPECT_EQ(c.train_config().caa.comp_pgd.steps, 7u);
  EXPECT_EQ(c.train_config().caa.iterations, 5u);
  EXPECT_EQ(parse_config(c.to_json()).to_json(), c.to_json());
  EXPECT_THROW(parse_config(R"({"sead": 3})"), FormatError);
  EXPECT_THROW(parse_config(R"({"attack": {"stepz": 3}})"), FormatError);
  EXPECT_THROW(parse_config("{"), FormatError);
  try {
    load_config(temp_path("missing.json"));
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.json"), std::string::npos);
  }
}

TEST(Suites, NamesResolve) {
  const SuiteOptions o;
  EXPECT_EQ(resolve_suites("hue", o).size(), 1u);
  EXPECT_EQ(resolve_suites("singles", o).size(), 6u);
  EXPECT_EQ(resolve_suites("two", o).size(), 10u);
  EXPECT_EQ(resolve_suites("full", o).size(), 2u);
  EXPECT_EQ(resolve_suites("full:scheduled", o).size(), 1u);
  EXPECT_EQ(resolve_suites("caa6", o)[0].components.size(), 6u);
  EXPECT_EQ(resolve_suites("caa1", o)[0].components.size(), 1u);
  const AttackSuite c3b = resolve_suites("caa3b:random", o)[0];
  ASSERT_EQ(c3b.components.size(), 3u);
  EXPECT_EQ(c3b.components[1].kind, PerturbationKind::Rotation);
  EXPECT_EQ(c3b.order_mode(), "random");
  const AttackSuite hl = resolve_suites("hue+linf", o)[0];
  EXPECT_EQ(hl.caa.mode, composite::ScheduleMode::Fixed);
  EXPECT_THROW(resolve_suites("caa7", o), InvalidArgument);
  EXPECT_THROW(resolve_suites("full:sideways", o), InvalidArgument);
}

TEST(Subset, SeededAndBounded) {
  const training::LabeledImages d = fixture().data.test;
  const auto a = select_eval_subset(d, 20, 3);
  const auto b = select_eval_subset(d, 20, 3);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.size(), 20u);
  EXPECT_EQ(select_eval_subset(d, 0, 3).size(), d.size());
}

TEST(EvaluateSuite, IdentitySuiteLeavesAccuracy) {
  const Fixture& f = fixture();
  const auto samples = select_eval_subset(f.data.test, 40, 1);
  const SuiteMetrics m = evaluate_suite(f.model, samples, identity_suite(SuiteOptions{}), 1);
  EXPECT_EQ(m.flipped, 0u);
  EXPECT_EQ(m.asr, 0.0);
  EXPECT_EQ(m.ra, m.clean_acc);
  EXPECT_DOUBLE_EQ(m.clean_acc, training::accuracy(f.model, samples));
}

TEST(EvaluateSuite, IdentityHoldsAndThreadsAgree) {
  const Fixture& f = fixture();
  const auto samples = select_eval_subset(f.data.test, 30, 2);
  for (const AttackSuite& s : resolve_suites("caa3a", SuiteOptions{})) {
    const SuiteMetrics one = evaluate_suite(f.model, samples, s, 5, 1);
    const SuiteMetrics three = evaluate_suite(f.model, samples, s, 5, 3);
    EXPECT_TRUE(one.identity_holds());
    EXPECT_EQ(one, three);
  }
}

TEST(EvaluateSuite, UntrainedModelNearChance) {
  Rng rng(8);
  const training::CnnModel model(training::init_params(3, 32, 4, rng));
  const auto samples = select_eval_subset(fixture().data.test, 200, 4);
  const SuiteMetrics m = evaluate_suite(model, samples, resolve_suites("brightness", SuiteOptions{})[0], 1);
  // Binomial(200, 1/4) has sd 0.031; stay within about 4 sd of chance.
  EXPECT_LE(m.ra, 0.25 + 0.125);
  EXPECT_TRUE(m.identity_holds());
}

TEST(EvaluateSuite, RobustAccuracyShrinksAsPoolGrows) {
  const Fixture& f = fixture();
  const auto samples = select_eval_subset(f.data.test, 60, 6);
  double previous = 1.0;
  for (int k = 1; k <= 6; ++k) {
    const SuiteMetrics m =
        evaluate_suite(f.model, samples, resolve_suites("caa" + std::to_string(k), SuiteOptions{})[0], 6);
    EXPECT_LE(m.ra, previous + 0.02) << "caa" << k;
    previous = m.ra;
  }
}

TEST(Sweep, GridAndPlateau) {
  const Fixture& f = fixture();
  const auto samples = select_eval_subset(f.data.test, 5, 1);
  const SweepResult s = loss_landscape_sweep(f.model, samples, PerturbationKind::Hue,
                                             transforms::default_interval(PerturbationKind::Hue), 21);
  ASSERT_EQ(s.grid.size(), 21u);
  EXPECT_EQ(s.grid[10], 0.0);
  EXPECT_EQ(s.losses.size(), 5u);
  EXPECT_THROW(loss_landscape_sweep(f.model, samples, PerturbationKind::Linf, {-0.03, 0.03}, 5), InvalidArgument);

  // A white image saturates under every contrast >= 1, so the loss is flat there.
  training::LabeledImages white;
  white.images = ad::Tensor({1, 3, 32, 32}, 1.0f);
  white.labels = {0};
  const SweepResult c = loss_landscape_sweep(f.model, white, PerturbationKind::Contrast, {1.0, 1.3}, 7);
  for (double v : c.losses[0]) EXPECT_EQ(v, c.losses[0][0]);

  const fs::path p = temp_path("sweep.csv");
  write_sweep_csv(s, p);
  const std::string text = slurp(p);
  EXPECT_EQ(text.substr(0, text.find('\n')), "kind,sample,label,delta,loss");
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), 1u + 5u * 21u);
}
