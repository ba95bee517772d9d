#include "caa/eval/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <vector>

#include "caa/error.hpp"

namespace caa::eval {

PairedTest paired_comparison_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("paired test needs equal-length samples, got " + std::to_string(a.size()) + " and " +
                          std::to_string(b.size()));
  }
  if (a.size() < 5) throw InvalidArgument("paired test needs at least 5 pairs, got " + std::to_string(a.size()));
  const std::size_t n = a.size();
  std::vector<double> d(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
    mean += d[i];
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);

  PairedTest t;
  t.pairs = n;
  t.mean_difference = mean;
  bool all_equal = true;
  for (double v : d) all_equal = all_equal && v == d[0];
  if (all_equal || ss == 0.0) {
    t.degenerate = true;
    t.p_value = mean != 0.0 ? 0.0 : 1.0;
    return t;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  t.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  t.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t.t_statistic)));
  return t;
}

}  // namespace caa::eval
