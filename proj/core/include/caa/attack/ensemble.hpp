#pragma once

#include <span>

#include "caa/attack/comp_pgd.hpp"
#include "caa/attack/result.hpp"

namespace caa::attack {

// Joint PGD over every component of a fixed-order chain: each step updates
// all deltas at once from the gradient of the full composition. `image` is a
// single sample [1, C, H, W]; component states are the restart-0 starting
// point. With one component the trajectory equals run_comp_pgd.
AttackResult run_ensemble_pgd(std::span<const AttackComponent> components, std::span<const std::size_t> order,
                              const ad::Tensor& image, const Model& model, const AttackTarget& target,
                              const CompPgdConfig& config, Rng* rng = nullptr);

// Throws InvalidArgument unless `order` is a permutation of 0..n-1.
void check_order(std::span<const std::size_t> order, std::size_t n);

}  // namespace caa::attack
