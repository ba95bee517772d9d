#pragma once

#include <span>
#include <vector>

#include "caa/attack/component.hpp"
#include "caa/attack/model.hpp"
#include "caa/scheduler/schedule.hpp"

namespace caa::scheduler {

// x^0 = image; x^i = sum_j z_ij * A_j(x^{i-1}; delta_j), i = 1..n. `z` is an
// [n, n] node, links[j] the j-th attack with its (frozen) delta node. Each
// stage is clamped to [0, 1], which only bites when a row of z sums to more
// than 1 (Sinkhorn output is doubly stochastic up to rounding). If
// `steps` is given it receives x^0..x^n.
ad::NodeId build_surrogate(ad::Graph& g, ad::NodeId z, ad::NodeId image, std::span<const attack::ChainLink> links,
                           std::vector<ad::NodeId>* steps = nullptr);

struct SurrogateComposition {
  ad::Tensor output;               // x^n
  std::vector<ad::Tensor> steps;   // x^0..x^n
};

SurrogateComposition compute_surrogate(const ScheduleMatrix& z, std::span<const attack::AttackComponent> components,
                                       const ad::Tensor& image);

struct SurrogateGradient {
  double loss = 0.0;       // attack loss at the surrogate image
  ScheduleMatrix grad;     // dL/dZ
};

SurrogateGradient surrogate_gradient(const ScheduleMatrix& z, std::span<const attack::AttackComponent> components,
                                     const ad::Tensor& image, const attack::Model& model,
                                     const attack::AttackTarget& target);

ad::Tensor to_tensor(const ScheduleMatrix& z);

}  // namespace caa::scheduler
