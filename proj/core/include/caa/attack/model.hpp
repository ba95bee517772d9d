#pragma once

#include <optional>
#include <vector>

#include "caa/diffengine/graph.hpp"

namespace caa::attack {

// A classifier F as seen by the attacks. Parameters are read-only here; the
// implementation appends them to the graph as constants.
class Model {
 public:
  virtual ~Model() = default;
  // Appends logits [N, K] for images [N, C, H, W].
  virtual ad::NodeId logits(ad::Graph& g, ad::NodeId images) const = 0;
  virtual std::size_t num_classes() const = 0;
};

ad::Tensor eval_logits(const Model& model, const ad::Tensor& images);
std::vector<int> predict(const Model& model, const ad::Tensor& images);

// What an attack maximizes: cross-entropy against `labels`, or, when
// `reference_logits` is set, KL(softmax(reference) || softmax(F(x'))) as in
// the TRADES inner maximization. Labels are still used for success checks.
struct AttackTarget {
  std::vector<int> labels;
  std::optional<ad::Tensor> reference_logits;
};

ad::NodeId attack_loss(ad::Graph& g, ad::NodeId logits, const AttackTarget& target);
std::vector<double> attack_loss_rows(const ad::Tensor& logits, const AttackTarget& target);

}  // namespace caa::attack
