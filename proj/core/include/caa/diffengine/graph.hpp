#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "caa/diffengine/tensor.hpp"

namespace caa::ad {

using NodeId = std::size_t;

// A differentiable operation. Implementations compute their output from the
// input values and, in backward, accumulate (+=) input gradients into the
// provided slots. A slot is null when that input does not need a gradient.
class Op {
 public:
  virtual ~Op() = default;
  virtual std::string_view name() const = 0;
  // Throws ShapeError on incompatible inputs; the graph prefixes the node.
  virtual Tensor forward(std::span<const Tensor* const> inputs) = 0;
  virtual void backward(std::span<const Tensor* const> inputs, const Tensor& output,
                        const Tensor& grad_output, std::span<Tensor* const> grad_inputs) = 0;
};

// Gradients of a scalar root, one entry per registered parameter.
class GradientMap {
 public:
  const Tensor& at(NodeId parameter) const;
  bool contains(NodeId parameter) const { return grads_.contains(parameter); }
  std::size_t size() const { return grads_.size(); }
  void insert(NodeId parameter, Tensor grad) { grads_.insert_or_assign(parameter, std::move(grad)); }
  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  std::map<NodeId, Tensor> grads_;
};

// Define-by-run computation graph. Nodes are appended in topological order;
// forward() evaluates every node up to the root and caches the values that
// backward() consumes. Not thread-safe; distinct graphs are independent.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  NodeId constant(Tensor value, std::string label = {});
  NodeId parameter(Tensor value, std::string label = {});
  NodeId apply(std::unique_ptr<Op> op, std::vector<NodeId> inputs, std::string label = {});

  // Replaces the value of a leaf and invalidates cached results.
  void set_value(NodeId leaf, Tensor value);

  const Tensor& forward(NodeId root);
  GradientMap backward(NodeId root);

  // Cached value; throws StateError if the node has not been evaluated.
  const Tensor& value(NodeId node) const;

  std::size_t size() const { return nodes_.size(); }
  bool is_parameter(NodeId node) const { return nodes_.at(node).is_parameter; }
  std::vector<NodeId> parameters() const;
  std::string describe(NodeId node) const;

 private:
  struct Node {
    std::unique_ptr<Op> op;  // null for leaves
    std::vector<NodeId> inputs;
    Tensor value;
    std::string label;
    bool is_parameter = false;
    bool requires_grad = false;
    bool evaluated = false;
  };

  void check_id(NodeId id) const;

  std::vector<Node> nodes_;
  NodeId forwarded_root_ = 0;
  bool forwarded_ = false;
};

}  // namespace caa::ad
