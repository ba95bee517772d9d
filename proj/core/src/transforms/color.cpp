#include "caa/transforms/color.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "caa/error.hpp"

namespace caa::transforms {
namespace {

constexpr double kSector = std::numbers::pi / 3.0;
const float kTwoPiF = static_cast<float>(2.0 * std::numbers::pi);

void require_image(const ad::Tensor& t, std::string_view what) {
  if (t.rank() != 4 || t.dim(1) != 3) {
    throw ShapeError(std::string(what) + " expects [N, 3, H, W], got " + ad::to_string(t.shape()));
  }
}

struct PixelHsv {
  double h, s, v;
  int max_ch, min_ch;
};

PixelHsv pixel_to_hsv(const double rgb[3]) {
  int a = 0, b = 0;
  for (int c = 1; c < 3; ++c) {
    if (rgb[c] > rgb[a]) a = c;
    if (rgb[c] < rgb[b]) b = c;
  }
  PixelHsv p{0.0, 0.0, rgb[a], a, b};
  const double chroma = rgb[a] - rgb[b];
  if (rgb[a] > 0.0) p.s = chroma / rgb[a];
  if (chroma > 0.0) {
    double h = 0.0;
    switch (a) {
      case 0:
        h = (rgb[1] - rgb[2]) / chroma;
        if (h < 0.0) h += 6.0;
        break;
      case 1: h = (rgb[2] - rgb[0]) / chroma + 2.0; break;
      default: h = (rgb[0] - rgb[1]) / chroma + 4.0; break;
    }
    p.h = h * kSector;
  }
  return p;
}

// Sector-wise HSV -> RGB with partial derivatives of each output channel
// with respect to (H, S, V).
struct RgbWithJacobian {
  double rgb[3];
  double d[3][3];  // d[channel][h, s, v]
};

RgbWithJacobian pixel_to_rgb(double hue, double s, double v) {
  double hp = hue / kSector;
  hp = std::clamp(hp, 0.0, 6.0);
  int sector = static_cast<int>(std::floor(hp));
  if (sector > 5) sector = 5;
  const double f = hp - sector;
  const double dfdh = 1.0 / kSector;
  // p = V(1-S), q = V(1-Sf), t = V(1-S(1-f)); each with (d/dH, d/dS, d/dV).
  const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  const double dp[3] = {0.0, -v, 1.0 - s};
  const double dq[3] = {-v * s * dfdh, -v * f, 1.0 - s * f};
  const double dt[3] = {v * s * dfdh, -v * (1.0 - f), 1.0 - s * (1.0 - f)};
  const double dv[3] = {0.0, 0.0, 1.0};
  const double* vals[3];
  const double* ders[3];
  double pv = p, qv = q, tv = t, vv = v;
  switch (sector) {
    case 0: vals[0] = &vv; vals[1] = &tv; vals[2] = &pv; ders[0] = dv; ders[1] = dt; ders[2] = dp; break;
    case 1: vals[0] = &qv; vals[1] = &vv; vals[2] = &pv; ders[0] = dq; ders[1] = dv; ders[2] = dp; break;
    case 2: vals[0] = &pv; vals[1] = &vv; vals[2] = &tv; ders[0] = dp; ders[1] = dv; ders[2] = dt; break;
    case 3: vals[0] = &pv; vals[1] = &qv; vals[2] = &vv; ders[0] = dp; ders[1] = dq; ders[2] = dv; break;
    case 4: vals[0] = &tv; vals[1] = &pv; vals[2] = &vv; ders[0] = dt; ders[1] = dp; ders[2] = dv; break;
    default: vals[0] = &vv; vals[1] = &pv; vals[2] = &qv; ders[0] = dv; ders[1] = dp; ders[2] = dq; break;
  }
  RgbWithJacobian out{};
  for (int c = 0; c < 3; ++c) {
    out.rgb[c] = *vals[c];
    for (int k = 0; k < 3; ++k) out.d[c][k] = ders[c][k];
  }
  return out;
}

void check_rgb_range(const ad::Tensor& rgb) {
  for (float x : rgb.data()) {
    if (!(x >= 0.0f && x <= 1.0f)) {
      throw InvalidArgument("rgb_to_hsv: value " + std::to_string(x) + " outside [0, 1]");
    }
  }
}

void check_hsv_range(const ad::Tensor& hsv) {
  const std::size_t plane = hsv.dim(2) * hsv.dim(3);
  for (std::size_t n = 0; n < hsv.dim(0); ++n) {
    const float* base = hsv.ptr() + n * 3 * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const float h = base[i], s = base[plane + i], v = base[2 * plane + i];
      if (!(h >= 0.0f && h <= kTwoPiF)) throw InvalidArgument("hsv_to_rgb: hue " + std::to_string(h) + " outside [0, 2pi]");
      if (!(s >= 0.0f && s <= 1.0f)) throw InvalidArgument("hsv_to_rgb: saturation " + std::to_string(s) + " outside [0, 1]");
      if (!(v >= 0.0f && v <= 1.0f)) throw InvalidArgument("hsv_to_rgb: value " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

ad::Tensor to_hsv(const ad::Tensor& rgb) {
  const std::size_t plane = rgb.dim(2) * rgb.dim(3);
  ad::Tensor out(rgb.shape());
  for (std::size_t n = 0; n < rgb.dim(0); ++n) {
    const float* src = rgb.ptr() + n * 3 * plane;
    float* dst = out.ptr() + n * 3 * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const double px[3] = {src[i], src[plane + i], src[2 * plane + i]};
      const PixelHsv p = pixel_to_hsv(px);
      dst[i] = static_cast<float>(p.h);
      dst[plane + i] = static_cast<float>(p.s);
      dst[2 * plane + i] = static_cast<float>(p.v);
    }
  }
  return out;
}

ad::Tensor to_rgb(const ad::Tensor& hsv) {
  const std::size_t plane = hsv.dim(2) * hsv.dim(3);
  ad::Tensor out(hsv.shape());
  for (std::size_t n = 0; n < hsv.dim(0); ++n) {
    const float* src = hsv.ptr() + n * 3 * plane;
    float* dst = out.ptr() + n * 3 * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const RgbWithJacobian r = pixel_to_rgb(src[i], src[plane + i], src[2 * plane + i]);
      for (int c = 0; c < 3; ++c) dst[c * plane + i] = static_cast<float>(r.rgb[c]);
    }
  }
  return out;
}

class RgbToHsvOp final : public ad::Op {
 public:
  std::string_view name() const override { return "rgb_to_hsv"; }
  ad::Tensor forward(std::span<const ad::Tensor* const> in) override {
    require_image(*in[0], name());
    check_rgb_range(*in[0]);
    return to_hsv(*in[0]);
  }
  void backward(std::span<const ad::Tensor* const> in, const ad::Tensor&, const ad::Tensor& go,
                std::span<ad::Tensor* const> gi) override {
    const ad::Tensor& rgb = *in[0];
    const std::size_t plane = rgb.dim(2) * rgb.dim(3);
    for (std::size_t n = 0; n < rgb.dim(0); ++n) {
      const float* src = rgb.ptr() + n * 3 * plane;
      const float* g = go.ptr() + n * 3 * plane;
      float* dst = gi[0]->ptr() + n * 3 * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double x[3] = {src[i], src[plane + i], src[2 * plane + i]};
        const PixelHsv p = pixel_to_hsv(x);
        const int a = p.max_ch, b = p.min_ch;
        const double gh = g[i], gs = g[plane + i], gv = g[2 * plane + i];
        double dx[3] = {0.0, 0.0, 0.0};
        dx[a] += gv;
        if (x[a] > 0.0) {
          dx[a] += gs * x[b] / (x[a] * x[a]);
          dx[b] -= gs / x[a];
        }
        const double chroma = x[a] - x[b];
        if (chroma > 0.0) {
          // h = offset + (x_p - x_q) / chroma
          int pch = 1, qch = 2;
          if (a == 1) { pch = 2; qch = 0; }
          if (a == 2) { pch = 0; qch = 1; }
          const double num = x[pch] - x[qch];
          const double scale = gh * kSector;
          dx[pch] += scale / chroma;
          dx[qch] -= scale / chroma;
          dx[a] -= scale * num / (chroma * chroma);
          dx[b] += scale * num / (chroma * chroma);
        }
        for (int c = 0; c < 3; ++c) dst[c * plane + i] += static_cast<float>(dx[c]);
      }
    }
  }
};

class HsvToRgbOp final : public ad::Op {
 public:
  std::string_view name() const override { return "hsv_to_rgb"; }
  ad::Tensor forward(std::span<const ad::Tensor* const> in) override {
    require_image(*in[0], name());
    check_hsv_range(*in[0]);
    return to_rgb(*in[0]);
  }
  void backward(std::span<const ad::Tensor* const> in, const ad::Tensor&, const ad::Tensor& go,
                std::span<ad::Tensor* const> gi) override {
    const ad::Tensor& hsv = *in[0];
    const std::size_t plane = hsv.dim(2) * hsv.dim(3);
    for (std::size_t n = 0; n < hsv.dim(0); ++n) {
      const float* src = hsv.ptr() + n * 3 * plane;
      const float* g = go.ptr() + n * 3 * plane;
      float* dst = gi[0]->ptr() + n * 3 * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const RgbWithJacobian r = pixel_to_rgb(src[i], src[plane + i], src[2 * plane + i]);
        for (int k = 0; k < 3; ++k) {
          double acc = 0.0;
          for (int c = 0; c < 3; ++c) acc += g[c * plane + i] * r.d[c][k];
          dst[k * plane + i] += static_cast<float>(acc);
        }
      }
    }
  }
};

}  // namespace

HsvImage rgb_to_hsv(const ad::Tensor& rgb) {
  require_image(rgb, "rgb_to_hsv");
  check_rgb_range(rgb);
  return HsvImage{to_hsv(rgb)};
}

ad::Tensor hsv_to_rgb(const HsvImage& hsv) {
  require_image(hsv.channels, "hsv_to_rgb");
  check_hsv_range(hsv.channels);
  return to_rgb(hsv.channels);
}

ad::NodeId rgb_to_hsv(ad::Graph& g, ad::NodeId rgb) { return g.apply(std::make_unique<RgbToHsvOp>(), {rgb}); }

ad::NodeId hsv_to_rgb(ad::Graph& g, ad::NodeId hsv) { return g.apply(std::make_unique<HsvToRgbOp>(), {hsv}); }

}  // namespace caa::transforms
