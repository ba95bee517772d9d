#pragma once

#include "caa/diffengine/graph.hpp"

namespace caa::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the reverse-mode gradient of the scalar `root` with respect to
// `parameter` against central differences with step h. The relative error of
// an entry is |analytic - numeric| / (|numeric| + 1e-8). Results are only
// meaningful at smooth points: a clamp or grid tap within h of its kink makes
// the difference quotient straddle two pieces.
GradCheckResult finite_difference_check(Graph& graph, NodeId root, NodeId parameter, double h);

}  // namespace caa::ad
