#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "caa/diffengine/graph.hpp"
#include "caa/rng.hpp"
#include "caa/transforms/perturbation.hpp"

namespace caa::attack {

using transforms::PerturbationInterval;
using transforms::PerturbationKind;
using transforms::PerturbationState;

struct AttackComponent {
  PerturbationKind kind = PerturbationKind::Hue;
  PerturbationInterval interval;
  PerturbationState state;
};

// Builds a component with the default interval for `kind`.
AttackComponent make_component(PerturbationKind kind);
AttackComponent make_component(PerturbationKind kind, PerturbationInterval interval);

struct CompPgdConfig {
  std::size_t steps = 10;     // T: 10 for evaluation, 7 inside adversarial training
  std::size_t restarts = 1;   // R
  bool early_stop = true;
  double step_scale = 2.5;    // step = step_scale * (high - low) / (2 T)
  // Skip the early-stop check of the unperturbed input when the caller has
  // already seen it classified correctly.
  bool skip_input_check = false;

  void validate() const;
};

double step_size(const PerturbationInterval& interval, const CompPgdConfig& config);

// Three-branch clip onto [low, high].
double clip_interval(double value, const PerturbationInterval& interval);

// Uniform draw from the interval: one value per sample ([N]) for semantic
// kinds, one per pixel for Linf. `image_shape` is [N, C, H, W].
PerturbationState init_delta(PerturbationKind kind, const PerturbationInterval& interval,
                             const ad::Shape& image_shape, Rng& rng);

// Parameter tensor that applies the identity transform.
PerturbationState identity_delta(PerturbationKind kind, const ad::Shape& image_shape);

// One link of a composite chain: kind plus the graph node holding its delta.
struct ChainLink {
  PerturbationKind kind;
  ad::NodeId delta;
};

// Applies links in sequence: links[0] first.
ad::NodeId compose_chain(ad::Graph& g, ad::NodeId image, std::span<const ChainLink> links);

}  // namespace caa::attack
