#include "caa/diffengine/gradcheck.hpp"

#include <cmath>

#include "caa/error.hpp"

namespace caa::ad {

GradCheckResult finite_difference_check(Graph& graph, NodeId root, NodeId parameter, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite_difference_check: step must be positive");
  if (!graph.is_parameter(parameter)) {
    throw InvalidArgument("finite_difference_check: " + graph.describe(parameter) + " is not a parameter");
  }
  const Tensor& root_value = graph.forward(root);
  if (root_value.size() != 1) {
    throw ShapeError("finite_difference_check: root " + graph.describe(root) + " is not scalar");
  }
  const Tensor analytic = graph.backward(root).at(parameter);
  const Tensor base = graph.value(parameter);

  GradCheckResult result;
  for (std::size_t i = 0; i < base.size(); ++i) {
    Tensor probe = base;
    probe[i] = static_cast<float>(static_cast<double>(base[i]) + h);
    // Use the step actually representable in float32.
    const double up_step = static_cast<double>(probe[i]) - base[i];
    graph.set_value(parameter, probe);
    const double up = graph.forward(root).item();
    probe[i] = static_cast<float>(static_cast<double>(base[i]) - h);
    const double down_step = static_cast<double>(base[i]) - probe[i];
    graph.set_value(parameter, probe);
    const double down = graph.forward(root).item();
    const double numeric = (up - down) / (up_step + down_step);
    const double err = std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-8);
    if (i == 0 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
      result.analytic = analytic[i];
      result.numeric = numeric;
    }
  }
  graph.set_value(parameter, base);
  graph.forward(root);
  return result;
}

}  // namespace caa::ad
