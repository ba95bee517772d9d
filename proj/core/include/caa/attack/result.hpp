#pragma once

#include <optional>
#include <vector>

#include "caa/diffengine/tensor.hpp"
#include "caa/transforms/perturbation.hpp"

namespace caa::attack {

struct ComponentTrace {
  transforms::PerturbationKind kind;
  std::size_t iteration = 0;    // scheduling iteration (0-based)
  std::vector<double> losses;   // one entry per Comp-PGD update
};

// Outcome of attacking a single image.
struct AttackResult {
  ad::Tensor adversarial;                              // [1, C, H, W]
  bool success = false;                                // prediction != label on `adversarial`
  bool clean_correct = true;                           // prediction == label on the clean input
  int prediction = -1;
  double final_loss = 0.0;
  std::vector<std::size_t> order;                      // pool indices, first applied first
  std::size_t applied = 0;                             // leading entries of `order` present in `adversarial`
  std::vector<transforms::PerturbationState> deltas;   // per pool index, values behind `adversarial`
  std::vector<ComponentTrace> traces;
  std::optional<std::size_t> success_iteration;        // scheduling iteration that succeeded
};

}  // namespace caa::attack
