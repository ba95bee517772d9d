#include "caa/attack/model.hpp"

#include "caa/diffengine/ops.hpp"

namespace caa::attack {

ad::Tensor eval_logits(const Model& model, const ad::Tensor& images) {
  ad::Graph g;
  const ad::NodeId out = model.logits(g, g.constant(images, "images"));
  return g.forward(out);
}

std::vector<int> predict(const Model& model, const ad::Tensor& images) {
  return ad::argmax_rows(eval_logits(model, images));
}

ad::NodeId attack_loss(ad::Graph& g, ad::NodeId logits, const AttackTarget& target) {
  if (target.reference_logits) {
    return ad::softmax_kl(g, g.constant(*target.reference_logits, "reference_logits"), logits);
  }
  return ad::softmax_cross_entropy(g, logits, target.labels);
}

std::vector<double> attack_loss_rows(const ad::Tensor& logits, const AttackTarget& target) {
  if (target.reference_logits) return ad::kl_rows(*target.reference_logits, logits);
  return ad::cross_entropy_rows(logits, target.labels);
}

}  // namespace caa::attack
