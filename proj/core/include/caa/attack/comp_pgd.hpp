#pragma once

#include <vector>

#include "caa/attack/component.hpp"
#include "caa/attack/model.hpp"

namespace caa::attack {

// delta <- clip(delta + step * sign(grad)). Throws NumericError when the
// gradient is not finite.
void signed_step(PerturbationState& state, const ad::Tensor& grad, double step, const PerturbationInterval& interval);

struct PgdStep {
  PerturbationState state;          // delta after the update
  std::vector<double> losses;       // per sample, at the delta before the update
  std::vector<int> predictions;     // per sample, at the delta before the update
  ad::Tensor perturbed;             // A(image; delta before the update)
};

// One signed-gradient ascent step on the component's delta, clipped to its
// interval. sign(0) = 0, so a zero gradient leaves delta unchanged.
// Throws NumericError when the gradient is not finite.
PgdStep pgd_step(const AttackComponent& component, const ad::Tensor& image, const Model& model,
                 const AttackTarget& target, double step);

struct CompPgdResult {
  ad::Tensor adversarial;                     // [N, C, H, W]
  PerturbationState state;                    // delta behind `adversarial`
  std::vector<char> sample_success;           // prediction != label, per sample
  bool success = false;                       // every sample misclassified
  bool early_stopped = false;
  std::vector<std::vector<double>> traces;    // [sample][step] attack loss
  std::vector<double> final_loss;             // per sample, on `adversarial`
  std::vector<int> predictions;
  std::vector<std::size_t> restart;           // selected restart per sample
};

// Component-wise PGD starting from component.state (restart 0). Restarts
// 1..R-1 draw fresh deltas from `rng`. With early_stop the input itself is
// checked first and the perturbed image at the top of every step; a batch
// stops when every sample is misclassified. Per sample, the reported
// candidate is the first successful restart, else the restart with the
// highest final loss.
CompPgdResult run_comp_pgd(const AttackComponent& component, const ad::Tensor& image, const Model& model,
                           const AttackTarget& target, const CompPgdConfig& config, Rng* rng = nullptr);

}  // namespace caa::attack
