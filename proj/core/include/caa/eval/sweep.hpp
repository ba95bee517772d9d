#pragma once

#include <filesystem>
#include <vector>

#include "caa/attack/model.hpp"
#include "caa/training/dataset.hpp"
#include "caa/transforms/perturbation.hpp"

namespace caa::eval {

struct SweepResult {
  transforms::PerturbationKind kind = transforms::PerturbationKind::Hue;
  std::vector<double> grid;                 // ascending, both endpoints included
  std::vector<int> labels;
  std::vector<std::vector<double>> losses;  // [sample][grid point], cross-entropy
};

// Cross-entropy of every sample at `points` evenly spaced values over the
// interval. A grid point that lands on the identity value up to rounding is
// snapped to it exactly. Linf is rejected (its parameter is not a scalar).
SweepResult loss_landscape_sweep(const attack::Model& model, const training::LabeledImages& samples,
                                 transforms::PerturbationKind kind, const transforms::PerturbationInterval& interval,
                                 std::size_t points);

// Columns: kind, sample, label, delta, loss.
void write_sweep_csv(const SweepResult& sweep, const std::filesystem::path& path);

}  // namespace caa::eval
