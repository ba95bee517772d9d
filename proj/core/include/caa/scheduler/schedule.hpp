#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "caa/rng.hpp"

namespace caa::scheduler {

// Row i is the i-th slot of the chain, column j the j-th attack; z_ij is the
// weight of attack j at slot i.
class ScheduleMatrix {
 public:
  ScheduleMatrix() = default;
  explicit ScheduleMatrix(std::size_t n, double fill = 0.0) : n_(n), z_(n * n, fill) {}
  ScheduleMatrix(std::size_t n, std::vector<double> values);
  static ScheduleMatrix from_rows(const std::vector<std::vector<double>>& rows);
  static ScheduleMatrix permutation(std::span<const std::size_t> order);

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return z_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return z_[i * n_ + j]; }
  std::span<const double> values() const { return z_; }
  std::span<double> values() { return z_; }

  double row_sum(std::size_t i) const;
  double col_sum(std::size_t j) const;
  // max over rows/columns of |sum - 1|
  double stochastic_error() const;
  std::string to_string() const;

 private:
  std::size_t n_ = 0;
  std::vector<double> z_;
};

inline constexpr std::size_t kSinkhornIterations = 20;

// Alternating row then column normalization, `iterations` rounds. Throws
// InvalidArgument on an empty matrix or a nonpositive / non-finite entry.
ScheduleMatrix sinkhorn_normalize(ScheduleMatrix z, std::size_t iterations = kSinkhornIterations);

// 1/n plus uniform noise in [0, 0.01/n], normalized. The noise breaks ties
// so the first assignment is well defined.
ScheduleMatrix init_schedule(std::size_t n, Rng& rng, std::size_t iterations = kSinkhornIterations);

// Z <- S(exp(Z + rate * dL/dZ)). Each row is shifted by its max before exp
// and the exponent is floored at -60 to keep every entry positive.
ScheduleMatrix update_schedule(const ScheduleMatrix& z, const ScheduleMatrix& grad, double rate = 1.0,
                               std::size_t iterations = kSinkhornIterations);

// order[i] = attack applied at slot i.
using OrderAssignment = std::vector<std::size_t>;

// Maximum-weight perfect matching of slots to attacks, O(n^3). Among optimal
// permutations the lexicographically smallest is returned.
OrderAssignment hungarian_assign(const ScheduleMatrix& z);

// Exhaustive reference for n <= 8; ties keep the lexicographically smallest.
OrderAssignment brute_force_assign(const ScheduleMatrix& z);

// sum_i z(i, order[i]), accumulated in slot order.
double assignment_value(const ScheduleMatrix& z, std::span<const std::size_t> order);

}  // namespace caa::scheduler
