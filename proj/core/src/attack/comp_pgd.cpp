#include "caa/attack/comp_pgd.hpp"

#include <algorithm>
#include <cmath>

#include "caa/diffengine/ops.hpp"
#include "caa/error.hpp"
#include "caa/transforms/transforms.hpp"

namespace caa::attack {
namespace {

struct Evaluation {
  ad::Tensor perturbed;
  ad::Tensor grad;
  std::vector<double> losses;
  std::vector<int> predictions;
};

Evaluation evaluate(PerturbationKind kind, const ad::Tensor& delta, const ad::Tensor& image, const Model& model,
                    const AttackTarget& target, bool with_grad) {
  ad::Graph g;
  const ad::NodeId x = g.constant(image, "image");
  const ad::NodeId d = with_grad ? g.parameter(delta, "delta") : g.constant(delta, "delta");
  const ad::NodeId perturbed = transforms::apply_perturbation(g, kind, x, d);
  const ad::NodeId logits = model.logits(g, perturbed);
  Evaluation e;
  if (with_grad) {
    const ad::NodeId loss = attack_loss(g, logits, target);
    g.forward(loss);
    e.grad = g.backward(loss).at(d);
  } else {
    g.forward(logits);
  }
  e.perturbed = g.value(perturbed);
  e.losses = attack_loss_rows(g.value(logits), target);
  e.predictions = ad::argmax_rows(g.value(logits));
  return e;
}

bool all_wrong(const std::vector<int>& predictions, const std::vector<int>& labels) {
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) return false;
  }
  return true;
}

// Copies sample n of `src` into sample n of `dst` (leading axis).
void copy_sample(ad::Tensor& dst, const ad::Tensor& src, std::size_t n) {
  const std::size_t stride = src.size() / src.dim(0);
  std::copy(src.ptr() + n * stride, src.ptr() + (n + 1) * stride, dst.ptr() + n * stride);
}

CompPgdResult single_run(const AttackComponent& c, PerturbationState state, const ad::Tensor& image,
                         const Model& model, const AttackTarget& target, const CompPgdConfig& cfg) {
  const std::size_t n = image.dim(0);
  const double step = step_size(c.interval, cfg);
  CompPgdResult r;
  r.traces.assign(n, {});
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    Evaluation e = evaluate(c.kind, state.delta, image, model, target, true);
    if (cfg.early_stop && all_wrong(e.predictions, target.labels)) {
      r.adversarial = std::move(e.perturbed);
      r.state = std::move(state);
      r.final_loss = std::move(e.losses);
      r.predictions = std::move(e.predictions);
      r.early_stopped = true;
      r.sample_success.assign(n, 1);
      r.success = true;
      return r;
    }
    for (std::size_t i = 0; i < n; ++i) r.traces[i].push_back(e.losses[i]);
    signed_step(state, e.grad, step, c.interval);
  }
  Evaluation e = evaluate(c.kind, state.delta, image, model, target, false);
  r.adversarial = std::move(e.perturbed);
  r.state = std::move(state);
  r.final_loss = std::move(e.losses);
  r.predictions = std::move(e.predictions);
  r.sample_success.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.sample_success[i] = r.predictions[i] != target.labels[i];
  r.success = std::all_of(r.sample_success.begin(), r.sample_success.end(), [](char s) { return s != 0; });
  return r;
}

}  // namespace

void signed_step(PerturbationState& state, const ad::Tensor& grad, double step, const PerturbationInterval& iv) {
  if (!grad.all_finite()) {
    std::size_t bad = 0;
    while (bad < grad.size() && std::isfinite(grad[bad])) ++bad;
    throw NumericError("non-finite gradient for " + std::string(transforms::to_string(state.kind)) + " delta at entry " +
                       std::to_string(bad) + " (value " + std::to_string(grad[bad]) + ", delta " +
                       std::to_string(state.delta[bad]) + ")");
  }
  const float lo = static_cast<float>(iv.low), hi = static_cast<float>(iv.high);
  const float a = static_cast<float>(step);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const float s = grad[i] > 0.0f ? 1.0f : (grad[i] < 0.0f ? -1.0f : 0.0f);
    float v = state.delta[i] + a * s;
    if (v < lo) v = lo;
    if (v > hi) v = hi;
    state.delta[i] = v;
  }
}

PgdStep pgd_step(const AttackComponent& component, const ad::Tensor& image, const Model& model,
                 const AttackTarget& target, double step) {
  if (!transforms::within(component.state, component.interval)) {
    throw InvalidArgument("pgd_step: delta outside its interval");
  }
  Evaluation e = evaluate(component.kind, component.state.delta, image, model, target, true);
  PgdStep out;
  out.state = component.state;
  signed_step(out.state, e.grad, step, component.interval);
  out.losses = std::move(e.losses);
  out.predictions = std::move(e.predictions);
  out.perturbed = std::move(e.perturbed);
  return out;
}

CompPgdResult run_comp_pgd(const AttackComponent& component, const ad::Tensor& image, const Model& model,
                           const AttackTarget& target, const CompPgdConfig& config, Rng* rng) {
  config.validate();
  if (image.rank() != 4) throw ShapeError("run_comp_pgd expects [N, C, H, W], got " + ad::to_string(image.shape()));
  const std::size_t n = image.dim(0);
  if (target.labels.size() != n) throw ShapeError("run_comp_pgd: label count does not match batch");
  if (!transforms::within(component.state, component.interval)) {
    throw InvalidArgument("run_comp_pgd: initial delta outside its interval");
  }

  if (config.early_stop && !config.skip_input_check) {
    const ad::Tensor logits = eval_logits(model, image);
    std::vector<int> preds = ad::argmax_rows(logits);
    if (all_wrong(preds, target.labels)) {
      CompPgdResult r;
      r.adversarial = image;
      r.state = component.state;
      r.sample_success.assign(n, 1);
      r.success = true;
      r.early_stopped = true;
      r.traces.assign(n, {});
      r.final_loss = attack_loss_rows(logits, target);
      r.predictions = std::move(preds);
      r.restart.assign(n, 0);
      return r;
    }
  }

  std::vector<CompPgdResult> runs;
  for (std::size_t k = 0; k < config.restarts; ++k) {
    PerturbationState start = component.state;
    if (k > 0) {
      if (!rng) throw InvalidArgument("run_comp_pgd: restarts need an rng");
      start = init_delta(component.kind, component.interval, image.shape(), *rng);
    }
    runs.push_back(single_run(component, std::move(start), image, model, target, config));
    if (config.early_stop && runs.back().success) break;
  }
  if (runs.size() == 1) {
    runs[0].restart.assign(n, 0);
    return std::move(runs[0]);
  }

  CompPgdResult out = runs[0];
  out.restart.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pick = runs.size();
    for (std::size_t k = 0; k < runs.size() && pick == runs.size(); ++k) {
      if (runs[k].sample_success[i]) pick = k;
    }
    if (pick == runs.size()) {
      pick = 0;
      for (std::size_t k = 1; k < runs.size(); ++k) {
        if (runs[k].final_loss[i] > runs[pick].final_loss[i]) pick = k;
      }
    }
    const CompPgdResult& src = runs[pick];
    out.restart[i] = pick;
    copy_sample(out.adversarial, src.adversarial, i);
    copy_sample(out.state.delta, src.state.delta, i);
    out.sample_success[i] = src.sample_success[i];
    out.traces[i] = src.traces[i];
    out.final_loss[i] = src.final_loss[i];
    out.predictions[i] = src.predictions[i];
  }
  out.success = std::all_of(out.sample_success.begin(), out.sample_success.end(), [](char s) { return s != 0; });
  out.early_stopped = std::any_of(runs.begin(), runs.end(), [](const CompPgdResult& r) { return r.early_stopped; });
  return out;
}

}  // namespace caa::attack
