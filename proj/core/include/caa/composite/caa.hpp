#pragma once

#include <optional>
#include <span>
#include <vector>

#include "caa/attack/comp_pgd.hpp"
#include "caa/attack/result.hpp"
#include "caa/scheduler/schedule.hpp"

namespace caa::composite {

using attack::AttackComponent;
using attack::AttackResult;
using transforms::PerturbationKind;

// The attack set: distinct kinds, 1 to 6 components, in canonical order.
class AttackPool {
 public:
  AttackPool() = default;
  explicit AttackPool(std::vector<AttackComponent> components);
  // Components with default intervals and identity states.
  static AttackPool from_kinds(std::span<const PerturbationKind> kinds);

  std::size_t size() const { return components_.size(); }
  const AttackComponent& operator[](std::size_t i) const { return components_[i]; }
  AttackComponent& operator[](std::size_t i) { return components_[i]; }
  std::span<const AttackComponent> components() const { return components_; }
  std::vector<PerturbationKind> kinds() const;

 private:
  std::vector<AttackComponent> components_;
};

enum class ScheduleMode { Fixed, Random, Scheduled };

struct CaaConfig {
  ScheduleMode mode = ScheduleMode::Scheduled;
  std::vector<std::size_t> fixed_order;   // Fixed mode; empty means canonical 0..n-1
  std::size_t iterations = 5;             // M
  attack::CompPgdConfig comp_pgd;
  // Shared order per batch, no early stop (inner maximization of training).
  bool training_mode = false;
  double schedule_rate = 1.0;             // step on dL/dZ
  std::size_t sinkhorn_iterations = scheduler::kSinkhornIterations;

  void validate(std::size_t pool_size) const;
};

// Applies every component with its current state, order[0] first.
ad::Tensor compose_in_order(const AttackPool& pool, std::span<const std::size_t> order, const ad::Tensor& image);

// Composite attack on one image [1, C, H, W]. With early stop (evaluation)
// the clean prediction is checked first, then the image at the top of every
// Comp-PGD step and after each full chain; the partially composed image is
// returned as soon as the model is fooled. Without early stop the result of
// the last scheduling iteration is returned.
AttackResult run_caa(const AttackPool& pool, const ad::Tensor& image, int label, const attack::Model& model,
                     const CaaConfig& config, Rng& rng);
AttackResult run_caa(const AttackPool& pool, const ad::Tensor& image, const attack::AttackTarget& target,
                     const attack::Model& model, const CaaConfig& config, Rng& rng);

// Output of a training-mode run: the whole batch shares one realized order.
struct BatchAttack {
  ad::Tensor adversarial;                              // [N, C, H, W]
  std::vector<std::size_t> order;
  std::vector<transforms::PerturbationState> deltas;   // per pool index, [N] or [N, C, H, W]
  std::vector<int> predictions;
  std::vector<double> final_loss;
  std::vector<std::vector<std::size_t>> orders;        // realized order of every scheduling iteration
};

// Training-mode composite attack on a batch (early stop forced off).
BatchAttack run_caa_training(const AttackPool& pool, const ad::Tensor& images, const attack::AttackTarget& target,
                             const attack::Model& model, const CaaConfig& config, Rng& rng);

// Training mode: one run_caa_training call split per sample. Evaluation
// mode: independent run_caa per sample, sample i seeded from
// Rng::stream(base, i) where base is one draw from `rng`; `threads` workers.
std::vector<AttackResult> run_caa_batch(const AttackPool& pool, const ad::Tensor& images,
                                        std::span<const int> labels, const attack::Model& model,
                                        const CaaConfig& config, Rng& rng, std::size_t threads = 1);

}  // namespace caa::composite
