#include "caa/attack/component.hpp"

#include <algorithm>

#include "caa/error.hpp"
#include "caa/transforms/transforms.hpp"

namespace caa::attack {

AttackComponent make_component(PerturbationKind kind) { return make_component(kind, transforms::default_interval(kind)); }

AttackComponent make_component(PerturbationKind kind, PerturbationInterval interval) {
  transforms::validate(kind, interval);
  AttackComponent c;
  c.kind = kind;
  c.interval = interval;
  c.state.kind = kind;
  return c;
}

void CompPgdConfig::validate() const {
  if (steps < 1) throw InvalidArgument("Comp-PGD needs at least one step");
  if (restarts < 1) throw InvalidArgument("Comp-PGD needs at least one restart");
  if (!(step_scale > 0.0)) throw InvalidArgument("Comp-PGD step scale must be positive");
}

double step_size(const PerturbationInterval& interval, const CompPgdConfig& config) {
  return config.step_scale * interval.width() / (2.0 * static_cast<double>(config.steps));
}

double clip_interval(double value, const PerturbationInterval& interval) {
  if (value < interval.low) return interval.low;
  if (value > interval.high) return interval.high;
  return value;
}

PerturbationState init_delta(PerturbationKind kind, const PerturbationInterval& interval,
                             const ad::Shape& image_shape, Rng& rng) {
  if (image_shape.size() != 4) throw ShapeError("init_delta expects an [N, C, H, W] image shape");
  transforms::validate(kind, interval);
  PerturbationState s;
  s.kind = kind;
  s.delta = transforms::is_semantic(kind) ? ad::Tensor(ad::Shape{image_shape[0]}) : ad::Tensor(image_shape);
  const float lo = static_cast<float>(interval.low), hi = static_cast<float>(interval.high);
  for (float& v : s.delta.data()) {
    v = std::clamp(static_cast<float>(rng.uniform(interval.low, interval.high)), lo, hi);
  }
  return s;
}

PerturbationState identity_delta(PerturbationKind kind, const ad::Shape& image_shape) {
  if (image_shape.size() != 4) throw ShapeError("identity_delta expects an [N, C, H, W] image shape");
  PerturbationState s;
  s.kind = kind;
  const float v = static_cast<float>(transforms::identity_value(kind));
  s.delta = transforms::is_semantic(kind) ? ad::Tensor(ad::Shape{image_shape[0]}, v) : ad::Tensor(image_shape, v);
  return s;
}

ad::NodeId compose_chain(ad::Graph& g, ad::NodeId image, std::span<const ChainLink> links) {
  ad::NodeId x = image;
  for (const ChainLink& link : links) x = transforms::apply_perturbation(g, link.kind, x, link.delta);
  return x;
}

}  // namespace caa::attack
