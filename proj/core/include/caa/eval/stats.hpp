#pragma once

#include <span>

namespace caa::eval {

struct PairedTest {
  double mean_difference = 0.0;   // mean of a[i] - b[i]
  double t_statistic = 0.0;       // 0 when degenerate
  double p_value = 1.0;           // two-sided
  std::size_t pairs = 0;
  // Differences have zero variance: p is 0 if their mean is nonzero, else 1.
  bool degenerate = false;
};

// Paired two-sided t-test on a - b. Needs at least 5 pairs of equal length.
PairedTest paired_comparison_test(std::span<const double> a, std::span<const double> b);

}  // namespace caa::eval
