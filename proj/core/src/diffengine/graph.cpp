#include "caa/diffengine/graph.hpp"

#include "caa/error.hpp"

namespace caa::ad {

const Tensor& GradientMap::at(NodeId parameter) const {
  auto it = grads_.find(parameter);
  if (it == grads_.end()) {
    throw InvalidArgument("no gradient recorded for node #" + std::to_string(parameter));
  }
  return it->second;
}

NodeId Graph::constant(Tensor value, std::string label) {
  Node n;
  n.value = std::move(value);
  n.label = std::move(label);
  n.evaluated = true;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

NodeId Graph::parameter(Tensor value, std::string label) {
  NodeId id = constant(std::move(value), std::move(label));
  nodes_[id].is_parameter = true;
  nodes_[id].requires_grad = true;
  return id;
}

NodeId Graph::apply(std::unique_ptr<Op> op, std::vector<NodeId> inputs, std::string label) {
  Node n;
  bool requires_grad = false;
  for (NodeId in : inputs) {
    check_id(in);
    requires_grad = requires_grad || nodes_[in].requires_grad;
  }
  n.op = std::move(op);
  n.inputs = std::move(inputs);
  n.label = std::move(label);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

void Graph::set_value(NodeId leaf, Tensor value) {
  check_id(leaf);
  Node& n = nodes_[leaf];
  if (n.op) throw InvalidArgument("set_value on non-leaf " + describe(leaf));
  if (n.value.shape() != value.shape()) {
    throw ShapeError("set_value on " + describe(leaf) + ": shape " + to_string(value.shape()) +
                     " does not match " + to_string(n.value.shape()));
  }
  n.value = std::move(value);
  for (Node& other : nodes_) {
    if (other.op) other.evaluated = false;
  }
  forwarded_ = false;
}

const Tensor& Graph::forward(NodeId root) {
  check_id(root);
  std::vector<char> needed(root + 1, 0);
  needed[root] = 1;
  for (NodeId id = root + 1; id-- > 0;) {
    if (!needed[id]) continue;
    for (NodeId in : nodes_[id].inputs) needed[in] = 1;
  }
  std::vector<const Tensor*> in_values;
  for (NodeId id = 0; id <= root; ++id) {
    Node& n = nodes_[id];
    if (!needed[id] || n.evaluated) continue;
    in_values.clear();
    for (NodeId in : n.inputs) in_values.push_back(&nodes_[in].value);
    try {
      n.value = n.op->forward(in_values);
    } catch (const ShapeError& e) {
      throw ShapeError(describe(id) + ": " + e.what());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(describe(id) + ": " + e.what());
    }
    n.evaluated = true;
  }
  forwarded_root_ = root;
  forwarded_ = true;
  return nodes_[root].value;
}

GradientMap Graph::backward(NodeId root) {
  check_id(root);
  if (!forwarded_ || forwarded_root_ < root || !nodes_[root].evaluated) {
    throw StateError("backward called before forward for " + describe(root));
  }
  if (nodes_[root].value.size() != 1) {
    throw ShapeError("backward requires a scalar root; " + describe(root) + " has shape " +
                     to_string(nodes_[root].value.shape()));
  }
  std::vector<Tensor> grads(root + 1);
  std::vector<char> has_grad(root + 1, 0);
  if (nodes_[root].requires_grad) {
    grads[root] = Tensor(nodes_[root].value.shape(), 1.0f);
    has_grad[root] = 1;
  }
  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (NodeId id = root + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!has_grad[id] || !n.op) continue;
    in_values.clear();
    in_grads.clear();
    bool any = false;
    for (NodeId in : n.inputs) {
      in_values.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (!has_grad[in]) {
          grads[in] = Tensor(nodes_[in].value.shape(), 0.0f);
          has_grad[in] = 1;
        }
        in_grads.push_back(&grads[in]);
        any = true;
      } else {
        in_grads.push_back(nullptr);
      }
    }
    if (any) n.op->backward(in_values, n.value, grads[id], in_grads);
    if (n.op) grads[id] = Tensor();  // release intermediate gradient memory
  }
  GradientMap out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (!nodes_[id].is_parameter) continue;
    if (id <= root && has_grad[id]) {
      out.insert(id, std::move(grads[id]));
    } else {
      out.insert(id, Tensor(nodes_[id].value.shape(), 0.0f));
    }
  }
  return out;
}

const Tensor& Graph::value(NodeId node) const {
  check_id(node);
  if (!nodes_[node].evaluated) throw StateError(describe(node) + " has not been evaluated");
  return nodes_[node].value;
}

std::vector<NodeId> Graph::parameters() const {
  std::vector<NodeId> out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].is_parameter) out.push_back(id);
  }
  return out;
}

std::string Graph::describe(NodeId node) const {
  check_id(node);
  const Node& n = nodes_[node];
  std::string s = "node #" + std::to_string(node);
  if (!n.label.empty()) s += " '" + n.label + "'";
  s += " (";
  s += n.op ? std::string(n.op->name()) : (n.is_parameter ? "parameter" : "constant");
  s += ")";
  return s;
}

void Graph::check_id(NodeId id) const {
  if (id >= nodes_.size()) {
    throw InvalidArgument("unknown node #" + std::to_string(id));
  }
}

}  // namespace caa::ad
