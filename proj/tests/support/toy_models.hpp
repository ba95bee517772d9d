#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "caa/attack/model.hpp"
#include "caa/diffengine/ops.hpp"

namespace caa::toys {

// logits = flatten(x) W + b with W [D, K].
class LinearModel final : public attack::Model {
 public:
  LinearModel(ad::Tensor weight, ad::Tensor bias) : w_(std::move(weight)), b_(std::move(bias)) {}

  ad::NodeId logits(ad::Graph& g, ad::NodeId images) const override {
    const ad::NodeId flat = ad::reshape_rows(g, images, w_.dim(0));
    return ad::add_bias(g, ad::matmul(g, flat, g.constant(w_)), g.constant(b_));
  }
  std::size_t num_classes() const override { return w_.dim(1); }

 private:
  ad::Tensor w_;
  ad::Tensor b_;
};

// Two classes scored by the image mean m: logits (-s m + c, s m - c). The
// class-0 loss grows with m, so brightening pushes label-0 inputs across the
// boundary at m = c / s.
inline LinearModel mean_threshold_model(std::size_t pixels, float s, float c) {
  ad::Tensor w({pixels, 2});
  for (std::size_t i = 0; i < pixels; ++i) {
    w[i * 2] = -s / static_cast<float>(pixels);
    w[i * 2 + 1] = s / static_cast<float>(pixels);
  }
  return LinearModel(std::move(w), ad::Tensor::vector({c, -c}));
}

// Model whose logits never depend on the input.
class ConstantModel final : public attack::Model {
 public:
  // `pixels` is C * H * W of the inputs.
  explicit ConstantModel(std::vector<float> logits, std::size_t pixels = 48)
      : logits_(std::move(logits)), pixels_(pixels) {}

  ad::NodeId logits(ad::Graph& g, ad::NodeId images) const override {
    // A zero weight matrix keeps the graph connected so attacks still get a
    // (zero) gradient.
    const std::size_t k = logits_.size();
    const ad::NodeId spread =
        ad::matmul(g, ad::reshape_rows(g, images, pixels_), g.constant(ad::Tensor({pixels_, k}, 0.0f)));
    return ad::add_bias(g, spread, g.constant(ad::Tensor({k}, logits_)));
  }
  std::size_t num_classes() const override { return logits_.size(); }

 private:
  std::vector<float> logits_;
  std::size_t pixels_;
};

// Central differences of a scalar function of one tensor, in double.
inline std::vector<double> numeric_gradient(const std::function<double(const ad::Tensor&)>& f, ad::Tensor at,
                                            double h) {
  std::vector<double> out(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const float keep = at[i];
    at[i] = static_cast<float>(keep + h);
    const double up = f(at);
    at[i] = static_cast<float>(keep - h);
    const double down = f(at);
    at[i] = keep;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(numeric) + 1e-8);
}

}  // namespace caa::toys
