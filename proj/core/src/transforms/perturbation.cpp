#include "caa/transforms/perturbation.hpp"

#include <cmath>
#include <numbers>

#include "caa/error.hpp"

namespace caa::transforms {

std::string_view to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::Hue: return "hue";
    case PerturbationKind::Saturation: return "saturation";
    case PerturbationKind::Rotation: return "rotation";
    case PerturbationKind::Brightness: return "brightness";
    case PerturbationKind::Contrast: return "contrast";
    case PerturbationKind::Linf: return "linf";
  }
  return "unknown";
}

PerturbationKind parse_kind(std::string_view name) {
  for (PerturbationKind k : kAllKinds) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown perturbation kind '" + std::string(name) + "'");
}

void validate(PerturbationKind kind, const PerturbationInterval& iv) {
  const std::string where = "interval for " + std::string(to_string(kind));
  if (!std::isfinite(iv.low) || !std::isfinite(iv.high)) throw InvalidArgument(where + " is not finite");
  if (iv.low > iv.high) throw InvalidArgument(where + " has low > high");
  switch (kind) {
    case PerturbationKind::Hue:
      if (iv.low < -std::numbers::pi || iv.high > std::numbers::pi) {
        throw InvalidArgument(where + " must lie within [-pi, pi]");
      }
      break;
    case PerturbationKind::Saturation:
    case PerturbationKind::Contrast:
      if (iv.low < 0.0) throw InvalidArgument(where + " must be non-negative");
      break;
    case PerturbationKind::Brightness:
      if (iv.low < -1.0 || iv.high > 1.0) throw InvalidArgument(where + " must lie within [-1, 1]");
      break;
    case PerturbationKind::Linf:
      if (iv.low != -iv.high) throw InvalidArgument(where + " must be symmetric [-eps, eps]");
      break;
    case PerturbationKind::Rotation:
      break;
  }
}

PerturbationInterval default_interval(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::Hue: return {-std::numbers::pi, std::numbers::pi};
    case PerturbationKind::Saturation: return {0.7, 1.3};
    case PerturbationKind::Rotation: return {-10.0, 10.0};
    case PerturbationKind::Brightness: return {-0.2, 0.2};
    case PerturbationKind::Contrast: return {0.7, 1.3};
    case PerturbationKind::Linf: return {-kDefaultLinfEps, kDefaultLinfEps};
  }
  return {};
}

double identity_value(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::Saturation:
    case PerturbationKind::Contrast:
      return 1.0;
    default:
      return 0.0;
  }
}

bool within(const PerturbationState& state, const PerturbationInterval& interval) {
  // Compare in float, the precision the deltas are stored in.
  const float lo = static_cast<float>(interval.low);
  const float hi = static_cast<float>(interval.high);
  for (float v : state.delta.data()) {
    if (!(v >= lo && v <= hi)) return false;
  }
  return true;
}

}  // namespace caa::transforms
