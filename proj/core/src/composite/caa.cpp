#include "caa/composite/caa.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "caa/attack/ensemble.hpp"
#include "caa/diffengine/ops.hpp"
#include "caa/error.hpp"
#include "caa/scheduler/surrogate.hpp"

namespace caa::composite {

AttackPool::AttackPool(std::vector<AttackComponent> components) : components_(std::move(components)) {
  if (components_.empty() || components_.size() > transforms::kAllKinds.size()) {
    throw InvalidArgument("attack pool needs 1 to 6 components, got " + std::to_string(components_.size()));
  }
  for (std::size_t i = 0; i < components_.size(); ++i) {
    transforms::validate(components_[i].kind, components_[i].interval);
    for (std::size_t j = 0; j < i; ++j) {
      if (components_[j].kind == components_[i].kind) {
        throw InvalidArgument("attack pool lists " + std::string(transforms::to_string(components_[i].kind)) +
                              " twice");
      }
    }
  }
}

AttackPool AttackPool::from_kinds(std::span<const PerturbationKind> kinds) {
  std::vector<AttackComponent> comps;
  for (PerturbationKind k : kinds) comps.push_back(attack::make_component(k));
  return AttackPool(std::move(comps));
}

std::vector<PerturbationKind> AttackPool::kinds() const {
  std::vector<PerturbationKind> out;
  for (const AttackComponent& c : components_) out.push_back(c.kind);
  return out;
}

void CaaConfig::validate(std::size_t pool_size) const {
  if (iterations < 1) throw InvalidArgument("CAA needs at least one scheduling iteration");
  comp_pgd.validate();
  if (mode == ScheduleMode::Fixed && !fixed_order.empty()) attack::check_order(fixed_order, pool_size);
  if (!(schedule_rate > 0.0)) throw InvalidArgument("schedule rate must be positive");
  if (sinkhorn_iterations < 1) throw InvalidArgument("Sinkhorn needs at least one iteration");
}

ad::Tensor compose_in_order(const AttackPool& pool, std::span<const std::size_t> order, const ad::Tensor& image) {
  attack::check_order(order, pool.size());
  ad::Graph g;
  const ad::NodeId x = g.constant(image, "image");
  std::vector<attack::ChainLink> links;
  for (std::size_t k : order) links.push_back({pool[k].kind, g.constant(pool[k].state.delta)});
  return g.forward(attack::compose_chain(g, x, links));
}

namespace {

struct Pass {
  ad::Tensor image;
  std::vector<transforms::PerturbationState> states;  // per pool index
  std::vector<int> predictions;
  std::vector<double> losses;
  std::vector<attack::ComponentTrace> traces;
  std::size_t applied = 0;
  bool stopped = false;
};

// One sequential pass over the chain; every component restarts from delta0.
Pass run_pass(const AttackPool& pool, const ad::Tensor& x, const attack::AttackTarget& target,
              const attack::Model& model, const attack::CompPgdConfig& pgd, std::span<const std::size_t> order,
              const std::vector<transforms::PerturbationState>& delta0, std::size_t iteration, Rng& rng) {
  Pass pass;
  pass.image = x;
  pass.states = delta0;
  attack::CompPgdConfig cfg = pgd;
  cfg.skip_input_check = true;  // the chain checks every intermediate image itself
  for (std::size_t k : order) {
    AttackComponent comp = pool[k];
    comp.state = delta0[k];
    attack::CompPgdResult r = attack::run_comp_pgd(comp, pass.image, model, target, cfg, &rng);
    pass.image = std::move(r.adversarial);
    pass.states[k] = std::move(r.state);
    pass.predictions = std::move(r.predictions);
    pass.losses = std::move(r.final_loss);
    if (x.dim(0) == 1) pass.traces.push_back({comp.kind, iteration, std::move(r.traces[0])});
    ++pass.applied;
    if (cfg.early_stop && r.success) {
      pass.stopped = true;
      break;
    }
  }
  return pass;
}

std::vector<std::size_t> initial_order(const CaaConfig& config, std::size_t n, Rng& rng,
                                       std::optional<scheduler::ScheduleMatrix>& z) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  switch (config.mode) {
    case ScheduleMode::Fixed:
      if (!config.fixed_order.empty()) order = config.fixed_order;
      break;
    case ScheduleMode::Random:
      rng.shuffle(std::span<std::size_t>(order));
      break;
    case ScheduleMode::Scheduled:
      z = scheduler::init_schedule(n, rng, config.sinkhorn_iterations);
      order = scheduler::hungarian_assign(*z);
      break;
  }
  return order;
}

void next_order(const CaaConfig& config, const AttackPool& pool, const Pass& pass, const ad::Tensor& x,
                const attack::AttackTarget& target, const attack::Model& model, Rng& rng,
                std::vector<std::size_t>& order, std::optional<scheduler::ScheduleMatrix>& z) {
  if (config.mode == ScheduleMode::Random) {
    rng.shuffle(std::span<std::size_t>(order));
  } else if (config.mode == ScheduleMode::Scheduled) {
    std::vector<AttackComponent> comps(pool.components().begin(), pool.components().end());
    for (std::size_t k = 0; k < comps.size(); ++k) comps[k].state = pass.states[k];
    const scheduler::SurrogateGradient sg = scheduler::surrogate_gradient(*z, comps, x, model, target);
    z = scheduler::update_schedule(*z, sg.grad, config.schedule_rate, config.sinkhorn_iterations);
    order = scheduler::hungarian_assign(*z);
  }
}

std::vector<transforms::PerturbationState> initial_deltas(const AttackPool& pool, const ad::Shape& shape, Rng& rng) {
  std::vector<transforms::PerturbationState> out;
  for (const AttackComponent& c : pool.components()) out.push_back(attack::init_delta(c.kind, c.interval, shape, rng));
  return out;
}

}  // namespace

AttackResult run_caa(const AttackPool& pool, const ad::Tensor& image, int label, const attack::Model& model,
                     const CaaConfig& config, Rng& rng) {
  attack::AttackTarget target;
  target.labels = {label};
  return run_caa(pool, image, target, model, config, rng);
}

AttackResult run_caa(const AttackPool& pool, const ad::Tensor& image, const attack::AttackTarget& target,
                     const attack::Model& model, const CaaConfig& config, Rng& rng) {
  config.validate(pool.size());
  if (image.rank() != 4 || image.dim(0) != 1) {
    throw ShapeError("run_caa expects one image [1, C, H, W], got " + ad::to_string(image.shape()));
  }
  if (target.labels.size() != 1) throw ShapeError("run_caa: expected one label");
  const int label = target.labels[0];
  const bool early = config.comp_pgd.early_stop && !config.training_mode;
  attack::CompPgdConfig pgd = config.comp_pgd;
  pgd.early_stop = early;

  AttackResult result;
  const ad::Tensor clean_logits = attack::eval_logits(model, image);
  result.prediction = ad::argmax_rows(clean_logits)[0];
  result.clean_correct = result.prediction == label;
  if (early && !result.clean_correct) {
    result.adversarial = image;
    result.success = true;
    result.final_loss = attack::attack_loss_rows(clean_logits, target)[0];
    result.success_iteration = 0;
    for (const AttackComponent& c : pool.components()) {
      result.deltas.push_back(attack::identity_delta(c.kind, image.shape()));
    }
    return result;
  }

  const std::vector<transforms::PerturbationState> delta0 = initial_deltas(pool, image.shape(), rng);
  std::optional<scheduler::ScheduleMatrix> z;
  std::vector<std::size_t> order = initial_order(config, pool.size(), rng, z);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    Pass pass = run_pass(pool, image, target, model, pgd, order, delta0, it, rng);
    for (attack::ComponentTrace& t : pass.traces) result.traces.push_back(std::move(t));
    const bool fooled = pass.predictions[0] != label;
    const bool last = it + 1 == config.iterations;
    if ((early && fooled) || last) {
      result.adversarial = std::move(pass.image);
      result.order = order;
      result.applied = pass.applied;
      result.deltas = std::move(pass.states);
      result.prediction = pass.predictions[0];
      result.final_loss = pass.losses[0];
      result.success = fooled;
      if (fooled) result.success_iteration = it;
      return result;
    }
    next_order(config, pool, pass, image, target, model, rng, order, z);
  }
  return result;  // not reached: the last iteration returns
}

BatchAttack run_caa_training(const AttackPool& pool, const ad::Tensor& images, const attack::AttackTarget& target,
                             const attack::Model& model, const CaaConfig& config, Rng& rng) {
  config.validate(pool.size());
  if (images.rank() != 4 || images.dim(0) == 0) {
    throw ShapeError("run_caa_training expects a nonempty [N, C, H, W] batch, got " + ad::to_string(images.shape()));
  }
  if (target.labels.size() != images.dim(0)) throw ShapeError("run_caa_training: label count does not match batch");
  attack::CompPgdConfig pgd = config.comp_pgd;
  pgd.early_stop = false;

  const std::vector<transforms::PerturbationState> delta0 = initial_deltas(pool, images.shape(), rng);
  std::optional<scheduler::ScheduleMatrix> z;
  std::vector<std::size_t> order = initial_order(config, pool.size(), rng, z);
  BatchAttack out;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    Pass pass = run_pass(pool, images, target, model, pgd, order, delta0, it, rng);
    out.orders.push_back(order);
    if (it + 1 == config.iterations) {
      out.adversarial = std::move(pass.image);
      out.order = order;
      out.deltas = std::move(pass.states);
      out.predictions = std::move(pass.predictions);
      out.final_loss = std::move(pass.losses);
      break;
    }
    next_order(config, pool, pass, images, target, model, rng, order, z);
  }
  return out;
}

std::vector<AttackResult> run_caa_batch(const AttackPool& pool, const ad::Tensor& images,
                                        std::span<const int> labels, const attack::Model& model,
                                        const CaaConfig& config, Rng& rng, std::size_t threads) {
  if (images.rank() != 4 || images.dim(0) == 0) {
    throw ShapeError("run_caa_batch expects a nonempty [N, C, H, W] batch, got " + ad::to_string(images.shape()));
  }
  const std::size_t n = images.dim(0);
  if (labels.size() != n) throw ShapeError("run_caa_batch: label count does not match batch");
  std::vector<AttackResult> results(n);

  if (config.training_mode) {
    attack::AttackTarget target;
    target.labels.assign(labels.begin(), labels.end());
    const std::vector<int> clean = attack::predict(model, images);
    BatchAttack b = run_caa_training(pool, images, target, model, config, rng);
    for (std::size_t i = 0; i < n; ++i) {
      AttackResult& r = results[i];
      r.adversarial = b.adversarial.slice_rows(i, 1);
      r.order = b.order;
      r.applied = pool.size();
      r.prediction = b.predictions[i];
      r.final_loss = b.final_loss[i];
      r.clean_correct = clean[i] == labels[i];
      r.success = r.prediction != labels[i];
      if (r.success) r.success_iteration = config.iterations - 1;
      for (const transforms::PerturbationState& s : b.deltas) {
        r.deltas.push_back({s.kind, s.delta.slice_rows(i, 1)});
      }
    }
    return results;
  }

  const std::uint64_t base = rng.next();
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        Rng local = Rng::stream(base, i);
        results[i] = run_caa(pool, images.slice_rows(i, 1), labels[i], model, config, local);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool_threads;
    for (std::size_t t = 0; t < workers; ++t) pool_threads.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace caa::composite
