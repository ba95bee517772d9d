#include "caa/eval/suite.hpp"

#include "caa/error.hpp"

namespace caa::eval {

using composite::ScheduleMode;
using PK = PerturbationKind;

PerturbationInterval SuiteOptions::interval(PerturbationKind kind) const {
  auto it = intervals.find(kind);
  return it == intervals.end() ? transforms::default_interval(kind) : it->second;
}

std::string_view to_string(ScheduleMode mode) {
  switch (mode) {
    case ScheduleMode::Fixed: return "fixed";
    case ScheduleMode::Random: return "random";
    case ScheduleMode::Scheduled: return "scheduled";
  }
  return "?";
}

ScheduleMode parse_schedule_mode(std::string_view name) {
  if (name == "fixed") return ScheduleMode::Fixed;
  if (name == "random") return ScheduleMode::Random;
  if (name == "scheduled") return ScheduleMode::Scheduled;
  throw InvalidArgument("unknown order mode '" + std::string(name) + "' (expected fixed, random or scheduled)");
}

std::string AttackSuite::order_mode() const { return std::string(to_string(caa.mode)); }

AttackSuite make_suite(std::string name, const std::vector<PerturbationKind>& kinds, ScheduleMode mode,
                       const SuiteOptions& options, std::vector<std::size_t> fixed_order) {
  AttackSuite s;
  s.name = std::move(name);
  for (PerturbationKind k : kinds) s.components.push_back(attack::make_component(k, options.interval(k)));
  s.caa.mode = mode;
  s.caa.fixed_order = std::move(fixed_order);
  s.caa.iterations = options.iterations;
  s.caa.comp_pgd = options.comp_pgd;
  s.caa.training_mode = false;
  s.caa.schedule_rate = options.schedule_rate;
  s.caa.sinkhorn_iterations = options.sinkhorn_iterations;
  // Validates kinds and order.
  composite::AttackPool check(s.components);
  s.caa.validate(check.size());
  return s;
}

AttackSuite identity_suite(const SuiteOptions& options) {
  std::vector<PerturbationKind> kinds(transforms::kAllKinds.begin(), transforms::kAllKinds.end());
  SuiteOptions pinned = options;
  for (PerturbationKind k : kinds) {
    const double v = transforms::identity_value(k);
    pinned.intervals[k] = {v, v};
  }
  pinned.iterations = 1;
  return make_suite("identity", kinds, ScheduleMode::Fixed, pinned);
}

namespace {

const std::map<std::string, std::vector<PK>>& composite_pools() {
  static const std::map<std::string, std::vector<PK>> pools = {
      {"caa3a", {PK::Hue, PK::Saturation, PK::Linf}},
      {"caa3b", {PK::Hue, PK::Rotation, PK::Linf}},
      {"caa3c", {PK::Brightness, PK::Contrast, PK::Linf}},
      {"semantic", {PK::Hue, PK::Saturation, PK::Rotation, PK::Brightness, PK::Contrast}},
      {"full", {PK::Hue, PK::Saturation, PK::Rotation, PK::Brightness, PK::Contrast, PK::Linf}},
  };
  return pools;
}

bool is_kind_name(const std::string& s) {
  for (PK k : transforms::kAllKinds) {
    if (transforms::to_string(k) == s) return true;
  }
  return false;
}

}  // namespace

std::vector<AttackSuite> resolve_suites(const std::string& name, const SuiteOptions& options) {
  std::vector<AttackSuite> out;
  if (name == "all") {
    for (const char* part : {"singles", "caa3a", "caa3b", "caa3c", "semantic", "full"}) {
      for (AttackSuite& s : resolve_suites(part, options)) out.push_back(std::move(s));
    }
    return out;
  }
  if (name == "singles") {
    for (PK k : transforms::kAllKinds) out.push_back(make_suite(std::string(transforms::to_string(k)), {k}, ScheduleMode::Fixed, options));
    return out;
  }
  if (is_kind_name(name)) {
    const PK k = transforms::parse_kind(name);
    out.push_back(make_suite(name, {k}, ScheduleMode::Fixed, options));
    return out;
  }
  if (name == "two") {
    for (PK k : transforms::kSemanticKinds) {
      const std::string s(transforms::to_string(k));
      out.push_back(make_suite(s + "+linf", {k, PK::Linf}, ScheduleMode::Fixed, options, {0, 1}));
      out.push_back(make_suite("linf+" + s, {k, PK::Linf}, ScheduleMode::Fixed, options, {1, 0}));
    }
    return out;
  }
  if (const auto plus = name.find('+'); plus != std::string::npos) {
    const std::string first = name.substr(0, plus), second = name.substr(plus + 1);
    if (is_kind_name(first) && second == "linf" && first != "linf") {
      out.push_back(make_suite(name, {transforms::parse_kind(first), PK::Linf}, ScheduleMode::Fixed, options, {0, 1}));
      return out;
    }
    if (first == "linf" && is_kind_name(second) && second != "linf") {
      out.push_back(make_suite(name, {transforms::parse_kind(second), PK::Linf}, ScheduleMode::Fixed, options, {1, 0}));
      return out;
    }
    throw InvalidArgument("unknown two-attack suite '" + name + "'");
  }
  if (name == "identity") {
    out.push_back(identity_suite(options));
    return out;
  }
  if (name.size() == 4 && name.starts_with("caa") && name[3] >= '1' && name[3] <= '6') {
    static const std::vector<PK> chain = {PK::Hue, PK::Saturation, PK::Rotation, PK::Brightness, PK::Contrast, PK::Linf};
    const std::size_t n = static_cast<std::size_t>(name[3] - '0');
    out.push_back(make_suite(name, std::vector<PK>(chain.begin(), chain.begin() + static_cast<std::ptrdiff_t>(n)),
                             ScheduleMode::Scheduled, options));
    return out;
  }
  std::string base = name;
  std::vector<ScheduleMode> modes = {ScheduleMode::Random, ScheduleMode::Scheduled};
  if (const auto colon = name.find(':'); colon != std::string::npos) {
    base = name.substr(0, colon);
    modes = {parse_schedule_mode(name.substr(colon + 1))};
  }
  const auto it = composite_pools().find(base);
  if (it == composite_pools().end()) throw InvalidArgument("unknown attack suite '" + name + "'");
  for (ScheduleMode m : modes) out.push_back(make_suite(base, it->second, m, options));
  return out;
}

}  // namespace caa::eval
