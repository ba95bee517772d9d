#pragma once

#include <map>
#include <string>
#include <vector>

#include "caa/composite/caa.hpp"

namespace caa::eval {

using transforms::PerturbationInterval;
using transforms::PerturbationKind;

// Shared settings for building suites: intervals per kind (defaults when
// absent), Comp-PGD settings and scheduling iterations.
struct SuiteOptions {
  std::map<PerturbationKind, PerturbationInterval> intervals;
  attack::CompPgdConfig comp_pgd;          // T = 10, early stop on
  std::size_t iterations = 5;              // M
  double schedule_rate = 1.0;
  std::size_t sinkhorn_iterations = scheduler::kSinkhornIterations;

  PerturbationInterval interval(PerturbationKind kind) const;
};

struct AttackSuite {
  std::string name;
  std::vector<attack::AttackComponent> components;  // pool, canonical order
  composite::CaaConfig caa;

  std::string order_mode() const;
};

std::string_view to_string(composite::ScheduleMode mode);
composite::ScheduleMode parse_schedule_mode(std::string_view name);

AttackSuite make_suite(std::string name, const std::vector<PerturbationKind>& kinds, composite::ScheduleMode mode,
                       const SuiteOptions& options, std::vector<std::size_t> fixed_order = {});

// Every component pinned to its identity value; the attack cannot change
// any image.
AttackSuite identity_suite(const SuiteOptions& options);

// Resolves a suite name:
//   hue | saturation | rotation | brightness | contrast | linf   single attacks
//   singles                                                      all six
//   <semantic>+linf, linf+<semantic>                             fixed two-attack orders
//   two                                                          all ten two-attack suites
//   caa3a (hue, saturation, linf), caa3b (hue, rotation, linf),
//   caa3c (brightness, contrast, linf), semantic, full           random and scheduled
//   append ":random", ":scheduled" or ":fixed" to pick one mode
//   caa1 .. caa6                                                 nested pools, scheduled
//   identity
//   all                                                          singles, caa3a-c, semantic, full
std::vector<AttackSuite> resolve_suites(const std::string& name, const SuiteOptions& options);

}  // namespace caa::eval
