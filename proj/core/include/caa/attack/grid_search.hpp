#pragma once

#include <span>

#include "caa/attack/component.hpp"
#include "caa/attack/model.hpp"
#include "caa/attack/result.hpp"

namespace caa::attack {

struct GridSearchConfig {
  std::size_t points = 5;   // K per component, K >= 2
  std::size_t batch = 64;   // grid points evaluated per forward pass

  void validate() const;
};

// Grid values lo + (hi - lo) * i / (K - 1), i = 0..K-1.
std::vector<double> grid_values(const PerturbationInterval& interval, std::size_t points);

// Exhaustive search over the K^N grid of a semantic-only chain at a fixed
// order. Returns the maximal-loss point; if that point is still classified
// correctly while another point is not, the maximal-loss misclassified point
// is returned instead so that `success` describes `adversarial`. Ties keep
// the earliest point in lexicographic grid order. Throws InvalidArgument for
// Linf components.
AttackResult grid_search_attack(std::span<const AttackComponent> components, std::span<const std::size_t> order,
                                const ad::Tensor& image, const Model& model, const AttackTarget& target,
                                const GridSearchConfig& config);

}  // namespace caa::attack
