#include "caa/scheduler/surrogate.hpp"

#include "caa/diffengine/ops.hpp"
#include "caa/error.hpp"
#include "caa/transforms/transforms.hpp"

namespace caa::scheduler {
namespace {

std::vector<attack::ChainLink> frozen_links(ad::Graph& g, std::span<const attack::AttackComponent> components) {
  std::vector<attack::ChainLink> links;
  for (const attack::AttackComponent& c : components) {
    links.push_back({c.kind, g.constant(c.state.delta, std::string(transforms::to_string(c.kind)))});
  }
  return links;
}

void check_sizes(const ScheduleMatrix& z, std::size_t n) {
  if (z.size() != n) {
    throw ShapeError("schedule matrix is " + std::to_string(z.size()) + "x" + std::to_string(z.size()) + " for " +
                     std::to_string(n) + " components");
  }
  if (n == 0) throw InvalidArgument("surrogate needs at least one component");
}

}  // namespace

ad::Tensor to_tensor(const ScheduleMatrix& z) {
  ad::Tensor t({z.size(), z.size()});
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = static_cast<float>(z.values()[k]);
  return t;
}

ad::NodeId build_surrogate(ad::Graph& g, ad::NodeId z, ad::NodeId image, std::span<const attack::ChainLink> links,
                           std::vector<ad::NodeId>* steps) {
  const std::size_t n = links.size();
  if (n == 0) throw InvalidArgument("surrogate needs at least one component");
  ad::NodeId x = image;
  if (steps) steps->assign(1, x);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<ad::NodeId> candidates;
    for (const attack::ChainLink& link : links) {
      candidates.push_back(transforms::apply_perturbation(g, link.kind, x, link.delta));
    }
    // Rows of a Sinkhorn output only sum to 1 approximately, so a stage can
    // leave [0, 1] by a rounding margin that the color transforms reject.
    x = ad::clamp(g, ad::weighted_sum(g, ad::select_row(g, z, i), std::move(candidates)), 0.0f, 1.0f);
    if (steps) steps->push_back(x);
  }
  return x;
}

SurrogateComposition compute_surrogate(const ScheduleMatrix& z, std::span<const attack::AttackComponent> components,
                                       const ad::Tensor& image) {
  check_sizes(z, components.size());
  ad::Graph g;
  const ad::NodeId zn = g.constant(to_tensor(z), "Z");
  const ad::NodeId x = g.constant(image, "image");
  std::vector<ad::NodeId> steps;
  const ad::NodeId out = build_surrogate(g, zn, x, frozen_links(g, components), &steps);
  g.forward(out);
  SurrogateComposition s;
  for (ad::NodeId id : steps) s.steps.push_back(g.value(id));
  s.output = s.steps.back();
  return s;
}

SurrogateGradient surrogate_gradient(const ScheduleMatrix& z, std::span<const attack::AttackComponent> components,
                                     const ad::Tensor& image, const attack::Model& model,
                                     const attack::AttackTarget& target) {
  check_sizes(z, components.size());
  ad::Graph g;
  const ad::NodeId zn = g.parameter(to_tensor(z), "Z");
  const ad::NodeId x = g.constant(image, "image");
  const ad::NodeId surrogate = build_surrogate(g, zn, x, frozen_links(g, components));
  const ad::NodeId loss = attack::attack_loss(g, model.logits(g, surrogate), target);
  SurrogateGradient out;
  out.loss = g.forward(loss).item();
  const ad::Tensor grad = g.backward(loss).at(zn);
  out.grad = ScheduleMatrix(z.size());
  for (std::size_t k = 0; k < grad.size(); ++k) out.grad.values()[k] = grad[k];
  return out;
}

}  // namespace caa::scheduler
