#include "caa/transforms/transforms.hpp"

#include <cmath>
#include <numbers>

#include "caa/diffengine/ops.hpp"
#include "caa/error.hpp"
#include "caa/transforms/color.hpp"

namespace caa::transforms {
namespace {

const float kTwoPiF = static_cast<float>(2.0 * std::numbers::pi);

class RotationGridOp final : public ad::Op {
 public:
  // inputs: theta [N], and the image being rotated (shape only, no gradient)
  std::string_view name() const override { return "rotation_grid"; }
  ad::Tensor forward(std::span<const ad::Tensor* const> in) override {
    const ad::Tensor& theta = *in[0];
    const ad::Tensor& img = *in[1];
    if (theta.rank() != 1) throw ShapeError("rotation_grid expects theta of shape [N], got " + ad::to_string(theta.shape()));
    if (img.rank() != 4 || img.dim(2) != img.dim(3)) {
      throw InvalidArgument("rotation requires square images, got " + ad::to_string(img.shape()));
    }
    if (img.dim(0) != theta.dim(0)) {
      throw ShapeError("rotation_grid: " + std::to_string(theta.dim(0)) + " angles for image " + ad::to_string(img.shape()));
    }
    side_ = img.dim(2);
    const std::size_t n_ = theta.dim(0);
    const double c = (static_cast<double>(side_) - 1.0) / 2.0;
    ad::Tensor grid(ad::Shape{n_, side_, side_, 2});
    for (std::size_t n = 0; n < n_; ++n) {
      if (!std::isfinite(theta[n])) throw InvalidArgument("rotation angle is not finite");
      const double rad = static_cast<double>(theta[n]) * std::numbers::pi / 180.0;
      const double cs = std::cos(rad), sn = std::sin(rad);
      for (std::size_t i = 0; i < side_; ++i) {
        for (std::size_t j = 0; j < side_; ++j) {
          const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
          float* cell = grid.ptr() + ((n * side_ + i) * side_ + j) * 2;
          cell[0] = static_cast<float>(c + cs * di - sn * dj);
          cell[1] = static_cast<float>(c + sn * di + cs * dj);
        }
      }
    }
    return grid;
  }
  void backward(std::span<const ad::Tensor* const> in, const ad::Tensor&, const ad::Tensor& go,
                std::span<ad::Tensor* const> gi) override {
    if (!gi[0]) return;  // the grid does not depend on image values
    const ad::Tensor& theta = *in[0];
    const double c = (static_cast<double>(side_) - 1.0) / 2.0;
    const double to_rad = std::numbers::pi / 180.0;
    for (std::size_t n = 0; n < theta.dim(0); ++n) {
      const double rad = static_cast<double>(theta[n]) * to_rad;
      const double cs = std::cos(rad), sn = std::sin(rad);
      double acc = 0.0;
      for (std::size_t i = 0; i < side_; ++i) {
        for (std::size_t j = 0; j < side_; ++j) {
          const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
          const float* g = go.ptr() + ((n * side_ + i) * side_ + j) * 2;
          acc += g[0] * (-sn * di - cs * dj) + g[1] * (cs * di - sn * dj);
        }
      }
      (*gi[0])[n] += static_cast<float>(acc * to_rad);
    }
  }

 private:
  std::size_t side_ = 0;
};

ad::Tensor run_scalar(PerturbationKind kind, const ad::Tensor& image, double delta) {
  if (image.rank() != 4) throw ShapeError("expected image batch [N, C, H, W], got " + ad::to_string(image.shape()));
  ad::Graph g;
  const ad::NodeId x = g.constant(image, "image");
  const ad::NodeId d = g.constant(ad::Tensor(ad::Shape{image.dim(0)}, static_cast<float>(delta)), "delta");
  const ad::NodeId out = apply_perturbation(g, kind, x, d);
  return g.forward(out);
}

void require_range(PerturbationKind kind, double delta, double lo, double hi) {
  if (!(delta >= lo && delta <= hi)) {
    throw InvalidArgument(std::string(to_string(kind)) + " parameter " + std::to_string(delta) + " outside [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

}  // namespace

ad::NodeId rotation_grid(ad::Graph& g, ad::NodeId theta_degrees, ad::NodeId image) {
  return g.apply(std::make_unique<RotationGridOp>(), {theta_degrees, image});
}

ad::NodeId apply_perturbation(ad::Graph& g, PerturbationKind kind, ad::NodeId image, ad::NodeId delta) {
  switch (kind) {
    case PerturbationKind::Hue: {
      const ad::NodeId hsv = rgb_to_hsv(g, image);
      const ad::NodeId hue = ad::clamp(g, ad::add_per_sample(g, ad::channel(g, hsv, 0), delta), 0.0f, kTwoPiF);
      return hsv_to_rgb(g, ad::concat_channels(g, {hue, ad::channel(g, hsv, 1), ad::channel(g, hsv, 2)}));
    }
    case PerturbationKind::Saturation: {
      const ad::NodeId hsv = rgb_to_hsv(g, image);
      const ad::NodeId sat = ad::clamp(g, ad::mul_per_sample(g, ad::channel(g, hsv, 1), delta), 0.0f, 1.0f);
      return hsv_to_rgb(g, ad::concat_channels(g, {ad::channel(g, hsv, 0), sat, ad::channel(g, hsv, 2)}));
    }
    case PerturbationKind::Brightness:
      return ad::clamp(g, ad::add_per_sample(g, image, delta), 0.0f, 1.0f);
    case PerturbationKind::Contrast:
      return ad::clamp(g, ad::mul_per_sample(g, image, delta), 0.0f, 1.0f);
    case PerturbationKind::Rotation:
      return ad::grid_sample(g, image, rotation_grid(g, delta, image));
    case PerturbationKind::Linf:
      return ad::clamp(g, ad::add(g, image, delta), 0.0f, 1.0f);
  }
  throw InvalidArgument("unknown perturbation kind");
}

ad::Tensor apply_hue(const ad::Tensor& image, double delta) {
  require_range(PerturbationKind::Hue, delta, -static_cast<double>(static_cast<float>(std::numbers::pi)),
                static_cast<double>(static_cast<float>(std::numbers::pi)));
  return run_scalar(PerturbationKind::Hue, image, delta);
}

ad::Tensor apply_saturation(const ad::Tensor& image, double delta) {
  require_range(PerturbationKind::Saturation, delta, 0.0, HUGE_VAL);
  return run_scalar(PerturbationKind::Saturation, image, delta);
}

ad::Tensor apply_brightness(const ad::Tensor& image, double delta) {
  require_range(PerturbationKind::Brightness, delta, -1.0, 1.0);
  return run_scalar(PerturbationKind::Brightness, image, delta);
}

ad::Tensor apply_contrast(const ad::Tensor& image, double delta) {
  require_range(PerturbationKind::Contrast, delta, 0.0, HUGE_VAL);
  return run_scalar(PerturbationKind::Contrast, image, delta);
}

ad::Tensor apply_rotation(const ad::Tensor& image, double theta_degrees) {
  if (!std::isfinite(theta_degrees)) throw InvalidArgument("rotation angle is not finite");
  return run_scalar(PerturbationKind::Rotation, image, theta_degrees);
}

ad::Tensor apply_linf(const ad::Tensor& image, const ad::Tensor& delta, double eps) {
  if (delta.shape() != image.shape()) {
    throw ShapeError("linf delta " + ad::to_string(delta.shape()) + " does not match image " +
                     ad::to_string(image.shape()));
  }
  const float bound = static_cast<float>(eps);
  for (float v : delta.data()) {
    if (!(v >= -bound && v <= bound)) throw InvalidArgument("linf delta entry " + std::to_string(v) + " exceeds eps");
  }
  ad::Graph g;
  const ad::NodeId out = apply_perturbation(g, PerturbationKind::Linf, g.constant(image), g.constant(delta));
  return g.forward(out);
}

ad::Tensor apply_scalar(PerturbationKind kind, const ad::Tensor& image, double delta) {
  switch (kind) {
    case PerturbationKind::Hue: return apply_hue(image, delta);
    case PerturbationKind::Saturation: return apply_saturation(image, delta);
    case PerturbationKind::Rotation: return apply_rotation(image, delta);
    case PerturbationKind::Brightness: return apply_brightness(image, delta);
    case PerturbationKind::Contrast: return apply_contrast(image, delta);
    case PerturbationKind::Linf: break;
  }
  throw InvalidArgument("apply_scalar does not accept linf");
}

}  // namespace caa::transforms
