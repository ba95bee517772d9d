#include "caa/eval/metrics.hpp"

#include <numeric>

#include "caa/error.hpp"

namespace caa::eval {

bool SuiteMetrics::identity_holds() const { return robust_correct + flipped == clean_correct; }

SuiteMetrics summarize(const std::string& suite, const std::string& order_mode,
                       const std::vector<attack::AttackResult>& results, std::span<const int> labels,
                       std::uint64_t seed) {
  if (results.size() != labels.size()) throw ShapeError("summarize: result and label counts differ");
  if (results.empty()) throw InvalidArgument("summarize: no samples");
  SuiteMetrics m;
  m.suite = suite;
  m.order_mode = order_mode;
  m.seed = seed;
  m.n = results.size();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const attack::AttackResult& r = results[i];
    if (r.clean_correct) ++m.clean_correct;
    if (r.prediction == labels[i]) ++m.robust_correct;
    if (r.clean_correct && r.prediction != labels[i]) ++m.flipped;
  }
  const double n = static_cast<double>(m.n);
  m.clean_acc = static_cast<double>(m.clean_correct) / n;
  m.ra = static_cast<double>(m.robust_correct) / n;
  m.asr = m.clean_correct == 0 ? 0.0 : static_cast<double>(m.flipped) / static_cast<double>(m.clean_correct);
  return m;
}

SuiteMetrics evaluate_suite(const attack::Model& model, const training::LabeledImages& samples,
                            const AttackSuite& suite, std::uint64_t seed, std::size_t threads) {
  if (samples.size() == 0) throw InvalidArgument("evaluate_suite: empty dataset");
  composite::CaaConfig cfg = suite.caa;
  cfg.training_mode = false;
  const composite::AttackPool pool(suite.components);
  Rng rng(seed);
  const std::vector<attack::AttackResult> results =
      composite::run_caa_batch(pool, samples.images, samples.labels, model, cfg, rng, threads);
  return summarize(suite.name, suite.order_mode(), results, samples.labels, seed);
}

training::LabeledImages select_eval_subset(const training::LabeledImages& data, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = Rng::stream(seed, 0x5eed);
  rng.shuffle(std::span<std::size_t>(idx));
  if (n != 0 && n < idx.size()) idx.resize(n);
  return data.subset(idx);
}

}  // namespace caa::eval
