#include "caa/attack/ensemble.hpp"

#include <algorithm>

#include "caa/diffengine/ops.hpp"
#include "caa/error.hpp"

namespace caa::attack {
namespace {

struct ChainEval {
  ad::Tensor perturbed;
  std::vector<ad::Tensor> grads;  // per component (pool index)
  double loss = 0.0;
  int prediction = -1;
};

ChainEval evaluate_chain(std::span<const AttackComponent> comps, const std::vector<PerturbationState>& states,
                         std::span<const std::size_t> order, const ad::Tensor& image, const Model& model,
                         const AttackTarget& target, bool with_grad) {
  ad::Graph g;
  const ad::NodeId x = g.constant(image, "image");
  std::vector<ad::NodeId> deltas(comps.size());
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const std::string label(transforms::to_string(comps[k].kind));
    deltas[k] = with_grad ? g.parameter(states[k].delta, label) : g.constant(states[k].delta, label);
  }
  std::vector<ChainLink> links;
  for (std::size_t k : order) links.push_back({comps[k].kind, deltas[k]});
  const ad::NodeId perturbed = compose_chain(g, x, links);
  const ad::NodeId logits = model.logits(g, perturbed);
  ChainEval e;
  if (with_grad) {
    const ad::NodeId loss = attack_loss(g, logits, target);
    g.forward(loss);
    const ad::GradientMap grads = g.backward(loss);
    for (ad::NodeId d : deltas) e.grads.push_back(grads.at(d));
  } else {
    g.forward(logits);
  }
  e.perturbed = g.value(perturbed);
  e.loss = attack_loss_rows(g.value(logits), target)[0];
  e.prediction = ad::argmax_rows(g.value(logits))[0];
  return e;
}

}  // namespace

void check_order(std::span<const std::size_t> order, std::size_t n) {
  if (order.size() != n) {
    throw InvalidArgument("order has " + std::to_string(order.size()) + " entries for " + std::to_string(n) +
                          " components");
  }
  std::vector<char> seen(n, 0);
  for (std::size_t k : order) {
    if (k >= n || seen[k]) throw InvalidArgument("order is not a permutation");
    seen[k] = 1;
  }
}

AttackResult run_ensemble_pgd(std::span<const AttackComponent> components, std::span<const std::size_t> order,
                              const ad::Tensor& image, const Model& model, const AttackTarget& target,
                              const CompPgdConfig& config, Rng* rng) {
  config.validate();
  if (components.empty()) throw InvalidArgument("run_ensemble_pgd: empty component list");
  check_order(order, components.size());
  if (image.rank() != 4 || image.dim(0) != 1) {
    throw ShapeError("run_ensemble_pgd expects one image [1, C, H, W], got " + ad::to_string(image.shape()));
  }
  if (target.labels.size() != 1) throw ShapeError("run_ensemble_pgd: expected one label");
  for (const AttackComponent& c : components) {
    if (!transforms::within(c.state, c.interval)) {
      throw InvalidArgument("run_ensemble_pgd: initial delta outside its interval");
    }
  }
  const int label = target.labels[0];

  AttackResult result;
  result.order.assign(order.begin(), order.end());

  const ad::Tensor clean_logits = eval_logits(model, image);
  const int clean_prediction = ad::argmax_rows(clean_logits)[0];
  if (config.early_stop) {
    const ad::Tensor& logits = clean_logits;
    result.prediction = clean_prediction;
    if (result.prediction != label) {
      result.adversarial = image;
      result.success = true;
      result.clean_correct = false;
      result.final_loss = attack_loss_rows(logits, target)[0];
      for (const AttackComponent& c : components) result.deltas.push_back(c.state);
      return result;
    }
  }

  std::vector<AttackResult> runs;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    std::vector<PerturbationState> states;
    for (const AttackComponent& c : components) {
      if (r == 0) {
        states.push_back(c.state);
      } else {
        if (!rng) throw InvalidArgument("run_ensemble_pgd: restarts need an rng");
        states.push_back(init_delta(c.kind, c.interval, image.shape(), *rng));
      }
    }
    AttackResult run;
    run.order = result.order;
    for (std::size_t k = 0; k < components.size(); ++k) run.traces.push_back({components[k].kind, 0, {}});
    bool stopped = false;
    for (std::size_t t = 0; t < config.steps && !stopped; ++t) {
      ChainEval e = evaluate_chain(components, states, order, image, model, target, true);
      if (config.early_stop && e.prediction != label) {
        run.adversarial = std::move(e.perturbed);
        run.final_loss = e.loss;
        run.prediction = e.prediction;
        stopped = true;
        break;
      }
      for (std::size_t k = 0; k < components.size(); ++k) {
        run.traces[k].losses.push_back(e.loss);
        signed_step(states[k], e.grads[k], step_size(components[k].interval, config), components[k].interval);
      }
    }
    if (!stopped) {
      ChainEval e = evaluate_chain(components, states, order, image, model, target, false);
      run.adversarial = std::move(e.perturbed);
      run.final_loss = e.loss;
      run.prediction = e.prediction;
    }
    run.success = run.prediction != label;
    run.deltas = std::move(states);
    runs.push_back(std::move(run));
    if (config.early_stop && runs.back().success) break;
  }

  std::size_t pick = runs.size();
  for (std::size_t r = 0; r < runs.size() && pick == runs.size(); ++r) {
    if (runs[r].success) pick = r;
  }
  if (pick == runs.size()) {
    pick = 0;
    for (std::size_t r = 1; r < runs.size(); ++r) {
      if (runs[r].final_loss > runs[pick].final_loss) pick = r;
    }
  }
  AttackResult out = std::move(runs[pick]);
  out.clean_correct = clean_prediction == label;
  out.applied = components.size();
  if (out.success) out.success_iteration = 0;
  return out;
}

}  // namespace caa::attack
