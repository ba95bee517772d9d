#include "caa/attack/grid_search.hpp"

#include "caa/attack/ensemble.hpp"
#include "caa/diffengine/ops.hpp"
#include "caa/error.hpp"

namespace caa::attack {

void GridSearchConfig::validate() const {
  if (points < 2) throw InvalidArgument("grid search needs K >= 2 points per component");
  if (batch == 0) throw InvalidArgument("grid search batch must be positive");
}

std::vector<double> grid_values(const PerturbationInterval& interval, std::size_t points) {
  if (points < 2) throw InvalidArgument("grid_values needs at least 2 points");
  std::vector<double> v(points);
  for (std::size_t i = 0; i < points; ++i) {
    v[i] = interval.low + interval.width() * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  v.back() = interval.high;
  return v;
}

AttackResult grid_search_attack(std::span<const AttackComponent> components, std::span<const std::size_t> order,
                                const ad::Tensor& image, const Model& model, const AttackTarget& target,
                                const GridSearchConfig& config) {
  config.validate();
  if (components.empty()) throw InvalidArgument("grid_search_attack: empty component list");
  check_order(order, components.size());
  for (const AttackComponent& c : components) {
    if (!transforms::is_semantic(c.kind)) throw InvalidArgument("grid search does not support linf components");
    transforms::validate(c.kind, c.interval);
  }
  if (image.rank() != 4 || image.dim(0) != 1) {
    throw ShapeError("grid_search_attack expects one image [1, C, H, W], got " + ad::to_string(image.shape()));
  }
  if (target.labels.size() != 1) throw ShapeError("grid_search_attack: expected one label");

  const std::size_t n = components.size();
  const std::size_t k = config.points;
  std::vector<std::vector<double>> values;
  for (const AttackComponent& c : components) values.push_back(grid_values(c.interval, k));
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (total > (std::size_t{1} << 40) / k) throw InvalidArgument("grid search: grid too large");
    total *= k;
  }

  const std::size_t sample = image.size();
  const int label = target.labels[0];
  // Grid index g maps to digits (component 0 most significant).
  auto digit = [&](std::size_t g, std::size_t comp) {
    for (std::size_t c = n - 1; c > comp; --c) g /= k;
    return g % k;
  };

  std::size_t best = 0, best_wrong = total;
  double best_loss = -1.0, best_wrong_loss = -1.0;
  ad::Tensor best_image, best_wrong_image;
  int best_pred = -1, best_wrong_pred = -1;

  for (std::size_t start = 0; start < total; start += config.batch) {
    const std::size_t m = std::min(config.batch, total - start);
    ad::Shape shape = image.shape();
    shape[0] = m;
    ad::Tensor batch(shape);
    for (std::size_t i = 0; i < m; ++i) std::copy(image.ptr(), image.ptr() + sample, batch.ptr() + i * sample);

    ad::Graph g;
    const ad::NodeId x = g.constant(std::move(batch), "images");
    std::vector<ad::NodeId> deltas(n);
    for (std::size_t c = 0; c < n; ++c) {
      ad::Tensor d({m});
      for (std::size_t i = 0; i < m; ++i) d[i] = static_cast<float>(values[c][digit(start + i, c)]);
      deltas[c] = g.constant(std::move(d));
    }
    std::vector<ChainLink> links;
    for (std::size_t c : order) links.push_back({components[c].kind, deltas[c]});
    const ad::NodeId perturbed = compose_chain(g, x, links);
    const ad::NodeId logits = model.logits(g, perturbed);
    g.forward(logits);

    AttackTarget rows;
    rows.labels.assign(m, label);
    if (target.reference_logits) {
      ad::Tensor ref({m, target.reference_logits->dim(1)});
      const std::size_t kc = ref.dim(1);
      for (std::size_t i = 0; i < m; ++i) {
        std::copy(target.reference_logits->ptr(), target.reference_logits->ptr() + kc, ref.ptr() + i * kc);
      }
      rows.reference_logits = std::move(ref);
    }
    const std::vector<double> losses = attack_loss_rows(g.value(logits), rows);
    const std::vector<int> preds = ad::argmax_rows(g.value(logits));
    for (std::size_t i = 0; i < m; ++i) {
      if (losses[i] > best_loss) {
        best_loss = losses[i];
        best = start + i;
        best_image = g.value(perturbed).slice_rows(i, 1);
        best_pred = preds[i];
      }
      if (preds[i] != label && losses[i] > best_wrong_loss) {
        best_wrong_loss = losses[i];
        best_wrong = start + i;
        best_wrong_image = g.value(perturbed).slice_rows(i, 1);
        best_wrong_pred = preds[i];
      }
    }
  }

  AttackResult r;
  r.order.assign(order.begin(), order.end());
  r.applied = n;
  r.clean_correct = predict(model, image)[0] == label;
  std::size_t chosen = best;
  if (best_pred == label && best_wrong < total) {
    chosen = best_wrong;
    r.adversarial = std::move(best_wrong_image);
    r.final_loss = best_wrong_loss;
    r.prediction = best_wrong_pred;
  } else {
    r.adversarial = std::move(best_image);
    r.final_loss = best_loss;
    r.prediction = best_pred;
  }
  r.success = r.prediction != label;
  if (r.success) r.success_iteration = 0;
  for (std::size_t c = 0; c < n; ++c) {
    ad::Tensor d({1}, static_cast<float>(values[c][digit(chosen, c)]));
    r.deltas.push_back({components[c].kind, std::move(d)});
  }
  return r;
}

}  // namespace caa::attack
