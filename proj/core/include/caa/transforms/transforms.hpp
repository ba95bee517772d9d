#pragma once

#include "caa/diffengine/graph.hpp"
#include "caa/transforms/perturbation.hpp"

namespace caa::transforms {

// Appends A_k(image; delta) to the graph. `image` is [N, 3, H, W] in [0, 1];
// `delta` is [N] for semantic kinds (radians, factor, degrees, offset,
// factor) and [N, 3, H, W] for Linf. The result is differentiable with
// respect to both image and delta.
ad::NodeId apply_perturbation(ad::Graph& g, PerturbationKind kind, ad::NodeId image, ad::NodeId delta);

// Inverse-mapped rotation grid for square [side x side] images: output pixel
// (i, j) samples the source at the point that the rotation about
// c = (side - 1) / 2 carries onto (i, j). theta is [N] in degrees; `image`
// supplies the (square) size only. The grid is [N, side, side, 2] holding
// (row, col).
ad::NodeId rotation_grid(ad::Graph& g, ad::NodeId theta_degrees, ad::NodeId image);

// Eager versions on plain tensors; each delta is shared by every sample.
ad::Tensor apply_hue(const ad::Tensor& image, double delta);
ad::Tensor apply_saturation(const ad::Tensor& image, double delta);
ad::Tensor apply_brightness(const ad::Tensor& image, double delta);
ad::Tensor apply_contrast(const ad::Tensor& image, double delta);
ad::Tensor apply_rotation(const ad::Tensor& image, double theta_degrees);
// `eps` bounds |delta| elementwise (precondition).
ad::Tensor apply_linf(const ad::Tensor& image, const ad::Tensor& delta, double eps = kDefaultLinfEps);

// Dispatches on kind for a scalar delta; Linf is rejected.
ad::Tensor apply_scalar(PerturbationKind kind, const ad::Tensor& image, double delta);

}  // namespace caa::transforms
