#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "caa/eval/suite.hpp"
#include "caa/training/trainer.hpp"

namespace caa::eval {

// Run configuration read from JSON. Every key is optional; unknown keys are
// rejected so typos do not silently fall back to defaults.
//
// {
//   "seed": 0,
//   "threads": 1,
//   "dataset":   {"source": "synthetic" | "cifar10", "seed": 0, "n_train": 4000, "n_test": 1000,
//                 "cifar_dir": ""},
//   "intervals": {"hue": [-3.14159, 3.14159], "saturation": [0.7, 1.3], "rotation": [-10, 10],
//                 "brightness": [-0.2, 0.2], "contrast": [0.7, 1.3], "linf": 0.0313725},
//   "attack":    {"kinds": ["hue", ...], "order": "scheduled", "fixed_order": [], "steps": 10,
//                 "restarts": 1, "early_stop": true, "iterations": 5, "schedule_rate": 1.0,
//                 "sinkhorn_iterations": 20},
//   "train":     {"epochs": 20, "batch_size": 64, "learning_rate": 0.05, "warmup_epochs": 1,
//                 "lr_decay": 0.9, "momentum": 0.9, "weight_decay": 0.0005, "trades_beta": 6.0,
//                 "kinds": [...], "order": "scheduled", "steps": 7, "iterations": 5,
//                 "eval_samples": 0},
//   "eval":      {"suites": ["all"], "samples": 500},
//   "sweep":     {"kind": "hue", "points": 21, "samples": 20}
// }
struct ToolConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  std::string dataset_source = "synthetic";
  std::uint64_t dataset_seed = 0;   // synthetic generation; independent of `seed`
  std::size_t n_train = 4000;
  std::size_t n_test = 1000;
  std::string cifar_dir;

  std::map<transforms::PerturbationKind, transforms::PerturbationInterval> intervals;

  std::vector<transforms::PerturbationKind> attack_kinds;   // empty: all six
  composite::ScheduleMode attack_order = composite::ScheduleMode::Scheduled;
  std::vector<std::size_t> attack_fixed_order;
  attack::CompPgdConfig attack_pgd;                          // T = 10
  std::size_t attack_iterations = 5;
  double schedule_rate = 1.0;
  std::size_t sinkhorn_iterations = scheduler::kSinkhornIterations;

  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  std::size_t warmup_epochs = 1;
  double lr_decay = 0.9;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double trades_beta = 6.0;
  std::vector<transforms::PerturbationKind> train_kinds;    // empty: all six
  composite::ScheduleMode train_order = composite::ScheduleMode::Scheduled;
  std::size_t train_steps = 7;
  std::size_t train_iterations = 5;
  std::size_t train_eval_samples = 0;

  std::vector<std::string> eval_suites = {"all"};
  std::size_t eval_samples = 500;

  transforms::PerturbationKind sweep_kind = transforms::PerturbationKind::Hue;
  std::size_t sweep_points = 21;
  std::size_t sweep_samples = 20;

  // Synthetic data from dataset_seed, or the CIFAR-10 files in cifar_dir.
  training::Dataset load_dataset() const;

  SuiteOptions suite_options() const;
  std::vector<attack::AttackComponent> attack_pool() const;
  std::vector<attack::AttackComponent> train_pool() const;
  composite::CaaConfig attack_caa() const;
  training::TrainConfig train_config() const;

  // Compact JSON with every field, used as the report snapshot.
  std::string to_json() const;
};

ToolConfig parse_config(const std::string& json_text);
// Throws IoError naming the path when it cannot be read.
ToolConfig load_config(const std::filesystem::path& path);

}  // namespace caa::eval
