#pragma once

#include "caa/diffengine/graph.hpp"

namespace caa::transforms {

// [N, 3, H, W] image in HSV: channel 0 hue in [0, 2pi], 1 saturation in
// [0, 1], 2 value in [0, 1].
struct HsvImage {
  ad::Tensor channels;
};

// Hue is scaled to [0, 2pi). Max/min ties resolve by channel priority
// R > G > B, and achromatic pixels get hue 0. Throws InvalidArgument when a
// value lies outside [0, 1].
HsvImage rgb_to_hsv(const ad::Tensor& rgb);
// Throws InvalidArgument for hue outside [0, 2pi] or S, V outside [0, 1].
ad::Tensor hsv_to_rgb(const HsvImage& hsv);

// Differentiable graph versions of the conversions above. Gradients follow
// the selected max/min channels (a subgradient at ties).
ad::NodeId rgb_to_hsv(ad::Graph& g, ad::NodeId rgb);
ad::NodeId hsv_to_rgb(ad::Graph& g, ad::NodeId hsv);

}  // namespace caa::transforms
