#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caa/eval/suite.hpp"
#include "caa/training/dataset.hpp"

namespace caa::eval {

struct SuiteMetrics {
  std::string suite;
  std::string order_mode;
  std::size_t n = 0;
  std::size_t clean_correct = 0;
  std::size_t robust_correct = 0;   // classified correctly after the attack
  std::size_t flipped = 0;          // clean-correct samples the attack fooled
  double clean_acc = 0.0;           // clean_correct / n
  double ra = 0.0;                  // robust_correct / n
  double asr = 0.0;                 // flipped / clean_correct (0 when nothing is correct)
  std::uint64_t seed = 0;

  // robust_correct == clean_correct - flipped, which makes
  // RA == CleanAcc * (1 - ASR) exact in rational arithmetic.
  bool identity_holds() const;
  friend bool operator==(const SuiteMetrics&, const SuiteMetrics&) = default;
};

struct MetricsReport {
  double clean_accuracy = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<SuiteMetrics> suites;
  std::string config_json = "{}";   // compact JSON snapshot of the run configuration
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Counts from per-sample attack results.
SuiteMetrics summarize(const std::string& suite, const std::string& order_mode,
                       const std::vector<attack::AttackResult>& results, std::span<const int> labels,
                       std::uint64_t seed);

// Runs the suite in evaluation mode (early stop) on every sample.
SuiteMetrics evaluate_suite(const attack::Model& model, const training::LabeledImages& samples,
                            const AttackSuite& suite, std::uint64_t seed, std::size_t threads = 1);

// First n samples of a seeded shuffle (n = 0 or n >= size: all, shuffled).
training::LabeledImages select_eval_subset(const training::LabeledImages& data, std::size_t n, std::uint64_t seed);

}  // namespace caa::eval
