#pragma once

#include <array>
#include <string>
#include <string_view>

#include "caa/diffengine/tensor.hpp"

namespace caa::transforms {

enum class PerturbationKind { Hue, Saturation, Rotation, Brightness, Contrast, Linf };

inline constexpr std::array<PerturbationKind, 6> kAllKinds = {
    PerturbationKind::Hue,        PerturbationKind::Saturation, PerturbationKind::Rotation,
    PerturbationKind::Brightness, PerturbationKind::Contrast,   PerturbationKind::Linf};

inline constexpr std::array<PerturbationKind, 5> kSemanticKinds = {
    PerturbationKind::Hue, PerturbationKind::Saturation, PerturbationKind::Rotation,
    PerturbationKind::Brightness, PerturbationKind::Contrast};

std::string_view to_string(PerturbationKind kind);
// Accepts the lower-case names produced by to_string ("hue", ..., "linf").
PerturbationKind parse_kind(std::string_view name);

// Semantic kinds carry one scalar per sample; Linf carries a per-pixel tensor.
constexpr bool is_semantic(PerturbationKind kind) { return kind != PerturbationKind::Linf; }

// Admissible parameter range [low, high]. Units: radians (hue), degrees
// (rotation), additive value (brightness, linf), multiplicative factor
// (saturation, contrast). For Linf the interval is [-eps, eps].
struct PerturbationInterval {
  double low = 0.0;
  double high = 0.0;

  double width() const { return high - low; }
  bool contains(double v) const { return v >= low && v <= high; }
  friend bool operator==(const PerturbationInterval&, const PerturbationInterval&) = default;
};

// Throws InvalidArgument when low > high or a kind-specific bound is broken.
void validate(PerturbationKind kind, const PerturbationInterval& interval);

// Default CIFAR-scale intervals: hue [-pi, pi], saturation [0.7, 1.3],
// rotation [-10, 10] degrees, brightness [-0.2, 0.2], contrast [0.7, 1.3],
// linf eps = 8/255.
PerturbationInterval default_interval(PerturbationKind kind);

inline constexpr double kDefaultLinfEps = 8.0 / 255.0;

// Parameter value that leaves an image unchanged.
double identity_value(PerturbationKind kind);

// Current parameter of one component: shape [N] for semantic kinds (one
// value per sample), [N, C, H, W] for Linf.
struct PerturbationState {
  PerturbationKind kind = PerturbationKind::Hue;
  ad::Tensor delta;
};

// True if every entry of the state lies in the interval.
bool within(const PerturbationState& state, const PerturbationInterval& interval);

}  // namespace caa::transforms
