#include "caa/scheduler/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "caa/error.hpp"

namespace caa::scheduler {

ScheduleMatrix::ScheduleMatrix(std::size_t n, std::vector<double> values) : n_(n), z_(std::move(values)) {
  if (z_.size() != n * n) {
    throw ShapeError("schedule matrix of size " + std::to_string(n) + " needs " + std::to_string(n * n) +
                     " values, got " + std::to_string(z_.size()));
  }
}

ScheduleMatrix ScheduleMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  ScheduleMatrix z(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) throw ShapeError("schedule matrix rows must form a square");
    for (std::size_t j = 0; j < rows.size(); ++j) z(i, j) = rows[i][j];
  }
  return z;
}

ScheduleMatrix ScheduleMatrix::permutation(std::span<const std::size_t> order) {
  ScheduleMatrix z(order.size());
  std::vector<char> seen(order.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] >= order.size() || seen[order[i]]) throw InvalidArgument("not a permutation");
    seen[order[i]] = 1;
    z(i, order[i]) = 1.0;
  }
  return z;
}

double ScheduleMatrix::row_sum(std::size_t i) const {
  double s = 0.0;
  for (std::size_t j = 0; j < n_; ++j) s += (*this)(i, j);
  return s;
}

double ScheduleMatrix::col_sum(std::size_t j) const {
  double s = 0.0;
  for (std::size_t i = 0; i < n_; ++i) s += (*this)(i, j);
  return s;
}

double ScheduleMatrix::stochastic_error() const {
  double e = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    e = std::max(e, std::abs(row_sum(i) - 1.0));
    e = std::max(e, std::abs(col_sum(i) - 1.0));
  }
  return e;
}

std::string ScheduleMatrix::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < n_; ++i) {
    os << (i ? ", [" : "[");
    for (std::size_t j = 0; j < n_; ++j) os << (j ? ", " : "") << (*this)(i, j);
    os << ']';
  }
  os << ']';
  return os.str();
}

ScheduleMatrix sinkhorn_normalize(ScheduleMatrix z, std::size_t iterations) {
  const std::size_t n = z.size();
  if (n == 0) throw InvalidArgument("sinkhorn_normalize: empty matrix");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = z(i, j);
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw InvalidArgument("sinkhorn_normalize: entry (" + std::to_string(i) + ", " + std::to_string(j) +
                              ") = " + std::to_string(v) + " is not positive and finite");
      }
    }
  }
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      const double s = z.row_sum(i);
      for (std::size_t j = 0; j < n; ++j) z(i, j) /= s;
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double s = z.col_sum(j);
      for (std::size_t i = 0; i < n; ++i) z(i, j) /= s;
    }
  }
  return z;
}

ScheduleMatrix init_schedule(std::size_t n, Rng& rng, std::size_t iterations) {
  if (n == 0) throw InvalidArgument("init_schedule: n must be at least 1");
  ScheduleMatrix z(n);
  const double base = 1.0 / static_cast<double>(n);
  for (double& v : z.values()) v = base + rng.uniform(0.0, 0.01 * base);
  return sinkhorn_normalize(std::move(z), iterations);
}

ScheduleMatrix update_schedule(const ScheduleMatrix& z, const ScheduleMatrix& grad, double rate,
                               std::size_t iterations) {
  const std::size_t n = z.size();
  if (grad.size() != n) {
    throw ShapeError("update_schedule: gradient is " + std::to_string(grad.size()) + "x" +
                     std::to_string(grad.size()) + ", schedule is " + std::to_string(n) + "x" + std::to_string(n));
  }
  for (std::size_t k = 0; k < n * n; ++k) {
    if (!std::isfinite(grad.values()[k])) {
      throw NumericError("update_schedule: non-finite gradient entry (" + std::to_string(k / n) + ", " +
                         std::to_string(k % n) + ")");
    }
  }
  ScheduleMatrix out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      out(i, j) = z(i, j) + rate * grad(i, j);
      row_max = std::max(row_max, out(i, j));
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) = std::exp(std::max(out(i, j) - row_max, -60.0));
  }
  return sinkhorn_normalize(std::move(out), iterations);
}

double assignment_value(const ScheduleMatrix& z, std::span<const std::size_t> order) {
  double s = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) s += z(i, order[i]);
  return s;
}

namespace {

// Minimum-cost assignment on an r x c cost matrix (r <= c), potentials
// formulation. Returns the column of every row.
std::vector<std::size_t> min_cost_assignment(const std::vector<double>& cost, std::size_t r, std::size_t c) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(r + 1, 0.0), v(c + 1, 0.0);
  std::vector<std::size_t> p(c + 1, 0), way(c + 1, 0);
  for (std::size_t i = 1; i <= r; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(c + 1, inf);
    std::vector<char> used(c + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= c; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * c + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= c; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(r);
  for (std::size_t j = 1; j <= c; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

// Best completion of the remaining slots over the attacks not yet used.
OrderAssignment complete(const ScheduleMatrix& z, const OrderAssignment& prefix) {
  const std::size_t n = z.size();
  std::vector<char> used(n, 0);
  for (std::size_t j : prefix) used[j] = 1;
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < n; ++j) {
    if (!used[j]) cols.push_back(j);
  }
  const std::size_t r = n - prefix.size();
  OrderAssignment out = prefix;
  if (r == 0) return out;
  std::vector<double> cost(r * r);
  for (std::size_t a = 0; a < r; ++a) {
    for (std::size_t b = 0; b < r; ++b) cost[a * r + b] = -z(prefix.size() + a, cols[b]);
  }
  for (std::size_t col : min_cost_assignment(cost, r, r)) out.push_back(cols[col]);
  return out;
}

}  // namespace

OrderAssignment hungarian_assign(const ScheduleMatrix& z) {
  const std::size_t n = z.size();
  if (n == 0) return {};
  for (double v : z.values()) {
    if (!std::isfinite(v)) throw InvalidArgument("hungarian_assign: non-finite entry");
  }
  const double best = assignment_value(z, complete(z, {}));
  double scale = 0.0;
  for (double v : z.values()) scale = std::max(scale, std::abs(v));
  const double tol = 64.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(n) * std::max(scale, 1e-300);

  // Fix slots one at a time to the smallest attack index that still admits
  // an optimal completion.
  OrderAssignment prefix;
  std::vector<char> used(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    bool placed = false;
    for (std::size_t j = 0; j < n && !placed; ++j) {
      if (used[j]) continue;
      OrderAssignment trial = prefix;
      trial.push_back(j);
      if (assignment_value(z, complete(z, trial)) >= best - tol) {
        prefix = std::move(trial);
        used[j] = 1;
        placed = true;
      }
    }
    if (!placed) return complete(z, {});  // unreachable for finite input
  }
  return prefix;
}

OrderAssignment brute_force_assign(const ScheduleMatrix& z) {
  const std::size_t n = z.size();
  if (n > 8) throw InvalidArgument("brute_force_assign supports n <= 8, got " + std::to_string(n));
  OrderAssignment perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  OrderAssignment best = perm;
  double best_value = assignment_value(z, perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double v = assignment_value(z, perm);
    if (v > best_value) {
      best_value = v;
      best = perm;
    }
  }
  return best;
}

}  // namespace caa::scheduler
