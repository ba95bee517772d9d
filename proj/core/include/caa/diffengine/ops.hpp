#pragma once

#include <span>
#include <vector>

#include "caa/diffengine/graph.hpp"

// Graph-building functions for the built-in operation set. Each call appends
// one node and returns its id; nothing is evaluated until Graph::forward.
namespace caa::ad {

// Elementwise, equal shapes.
NodeId add(Graph& g, NodeId a, NodeId b);
NodeId sub(Graph& g, NodeId a, NodeId b);
NodeId mul(Graph& g, NodeId a, NodeId b);
NodeId div(Graph& g, NodeId a, NodeId b);

NodeId add_scalar(Graph& g, NodeId a, float s);
NodeId mul_scalar(Graph& g, NodeId a, float s);

NodeId exp(Graph& g, NodeId a);
NodeId log(Graph& g, NodeId a);
NodeId relu(Graph& g, NodeId a);

// Clamp to [lo, hi]. The gradient passes through on the closed interval
// (boundary values included) and is zero strictly outside it.
NodeId clamp(Graph& g, NodeId a, float lo, float hi);

// Full reductions to a scalar. Sums accumulate in double.
NodeId sum(Graph& g, NodeId a);
NodeId mean(Graph& g, NodeId a);
// Gradient routes to the first extremal element.
NodeId reduce_max(Graph& g, NodeId a);
NodeId reduce_min(Graph& g, NodeId a);

// [m, k] x [k, n] -> [m, n]
NodeId matmul(Graph& g, NodeId a, NodeId b);

// x: [N, C, H, W], w: [O, C, kh, kw]; stride 1, zero padding `pad`.
NodeId conv2d(Graph& g, NodeId x, NodeId w, std::size_t pad);
// Adds b[c] along axis 1 of x ([N, C, ...]).
NodeId add_bias(Graph& g, NodeId x, NodeId b);
// Non-overlapping k x k max pooling on [N, C, H, W].
NodeId max_pool2d(Graph& g, NodeId x, std::size_t k);
NodeId reshape(Graph& g, NodeId x, Shape shape);
// [N, ...] -> [N, cols]
NodeId reshape_rows(Graph& g, NodeId x, std::size_t cols);

// x: [N, ...], s: [N]; s[n] is broadcast over sample n.
NodeId add_per_sample(Graph& g, NodeId x, NodeId s);
NodeId mul_per_sample(Graph& g, NodeId x, NodeId s);

// Channel c of [N, C, H, W] as [N, 1, H, W].
NodeId channel(Graph& g, NodeId x, std::size_t c);
// Concatenate [N, C_i, H, W] tensors along axis 1.
NodeId concat_channels(Graph& g, std::vector<NodeId> parts);

// Row i of a [r, c] matrix as a [c] vector.
NodeId select_row(Graph& g, NodeId m, std::size_t i);
// sum_i w[i] * tensors[i]; w has shape [tensors.size()].
NodeId weighted_sum(Graph& g, NodeId w, std::vector<NodeId> tensors);

// Bilinear sampling of img [N, C, H, W] at grid [N, Ho, Wo, 2] holding
// (row, col) source coordinates in pixel units. Out-of-bounds taps read 0.
NodeId grid_sample(Graph& g, NodeId img, NodeId grid);

// Mean over the batch of -log softmax(logits[n])[labels[n]]. logits: [N, K].
NodeId softmax_cross_entropy(Graph& g, NodeId logits, std::vector<int> labels);
// Mean over the batch of KL(softmax(p) || softmax(q)); differentiable in both.
NodeId softmax_kl(Graph& g, NodeId p_logits, NodeId q_logits);

// Helpers on plain tensors.
std::vector<int> argmax_rows(const Tensor& logits);
std::vector<double> cross_entropy_rows(const Tensor& logits, std::span<const int> labels);
std::vector<double> kl_rows(const Tensor& p_logits, const Tensor& q_logits);

}  // namespace caa::ad
