#include "caa/diffengine/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "caa/error.hpp"

namespace caa::ad {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, std::string_view what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     to_string(t.shape()));
  }
}

// ---------------------------------------------------------------- elementwise

enum class Binary { Add, Sub, Mul, Div };

class BinaryOp final : public Op {
 public:
  explicit BinaryOp(Binary kind) : kind_(kind) {}
  std::string_view name() const override {
    switch (kind_) {
      case Binary::Add: return "add";
      case Binary::Sub: return "sub";
      case Binary::Mul: return "mul";
      case Binary::Div: return "div";
    }
    return "binary";
  }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& a = *in[0];
    const Tensor& b = *in[1];
    require_same_shape(a, b, name());
    Tensor out(a.shape());
    const std::size_t n = a.size();
    switch (kind_) {
      case Binary::Add: for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i]; break;
      case Binary::Sub: for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i]; break;
      case Binary::Mul: for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i]; break;
      case Binary::Div: for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i]; break;
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const Tensor& a = *in[0];
    const Tensor& b = *in[1];
    const std::size_t n = a.size();
    Tensor* ga = gi[0];
    Tensor* gb = gi[1];
    switch (kind_) {
      case Binary::Add:
        if (ga) for (std::size_t i = 0; i < n; ++i) (*ga)[i] += go[i];
        if (gb) for (std::size_t i = 0; i < n; ++i) (*gb)[i] += go[i];
        break;
      case Binary::Sub:
        if (ga) for (std::size_t i = 0; i < n; ++i) (*ga)[i] += go[i];
        if (gb) for (std::size_t i = 0; i < n; ++i) (*gb)[i] -= go[i];
        break;
      case Binary::Mul:
        if (ga) for (std::size_t i = 0; i < n; ++i) (*ga)[i] += go[i] * b[i];
        if (gb) for (std::size_t i = 0; i < n; ++i) (*gb)[i] += go[i] * a[i];
        break;
      case Binary::Div:
        if (ga) for (std::size_t i = 0; i < n; ++i) (*ga)[i] += go[i] / b[i];
        if (gb) for (std::size_t i = 0; i < n; ++i) (*gb)[i] -= go[i] * a[i] / (b[i] * b[i]);
        break;
    }
  }

 private:
  Binary kind_;
};

enum class Unary { AddScalar, MulScalar, Exp, Log, Relu };

class UnaryOp final : public Op {
 public:
  UnaryOp(Unary kind, float s = 0.0f) : kind_(kind), s_(s) {}
  std::string_view name() const override {
    switch (kind_) {
      case Unary::AddScalar: return "add_scalar";
      case Unary::MulScalar: return "mul_scalar";
      case Unary::Exp: return "exp";
      case Unary::Log: return "log";
      case Unary::Relu: return "relu";
    }
    return "unary";
  }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& a = *in[0];
    Tensor out(a.shape());
    const std::size_t n = a.size();
    switch (kind_) {
      case Unary::AddScalar: for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + s_; break;
      case Unary::MulScalar: for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s_; break;
      case Unary::Exp: for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(a[i]); break;
      case Unary::Log: for (std::size_t i = 0; i < n; ++i) out[i] = std::log(a[i]); break;
      case Unary::Relu: for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0f ? a[i] : 0.0f; break;
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor& out, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const Tensor& a = *in[0];
    Tensor& ga = *gi[0];
    const std::size_t n = a.size();
    switch (kind_) {
      case Unary::AddScalar: for (std::size_t i = 0; i < n; ++i) ga[i] += go[i]; break;
      case Unary::MulScalar: for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * s_; break;
      case Unary::Exp: for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * out[i]; break;
      case Unary::Log: for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] / a[i]; break;
      case Unary::Relu: for (std::size_t i = 0; i < n; ++i) ga[i] += a[i] > 0.0f ? go[i] : 0.0f; break;
    }
  }

 private:
  Unary kind_;
  float s_;
};

class ClampOp final : public Op {
 public:
  ClampOp(float lo, float hi) : lo_(lo), hi_(hi) {}
  std::string_view name() const override { return "clamp"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& a = *in[0];
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::clamp(a[i], lo_, hi_);
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const Tensor& a = *in[0];
    Tensor& ga = *gi[0];
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] >= lo_ && a[i] <= hi_) ga[i] += go[i];
    }
  }

 private:
  float lo_, hi_;
};

// ---------------------------------------------------------------- reductions

class SumOp final : public Op {
 public:
  explicit SumOp(bool mean) : mean_(mean) {}
  std::string_view name() const override { return mean_ ? "mean" : "sum"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& a = *in[0];
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    if (mean_ && a.size() > 0) acc /= static_cast<double>(a.size());
    return Tensor::scalar(static_cast<float>(acc));
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const Tensor& a = *in[0];
    float g = go[0];
    if (mean_ && a.size() > 0) g /= static_cast<float>(a.size());
    for (float& v : gi[0]->data()) v += g;
  }

 private:
  bool mean_;
};

class ExtremumOp final : public Op {
 public:
  explicit ExtremumOp(bool max) : max_(max) {}
  std::string_view name() const override { return max_ ? "reduce_max" : "reduce_min"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& a = *in[0];
    if (a.empty()) throw ShapeError("reduction over empty tensor");
    index_ = 0;
    for (std::size_t i = 1; i < a.size(); ++i) {
      if (max_ ? a[i] > a[index_] : a[i] < a[index_]) index_ = i;
    }
    return Tensor::scalar(a[index_]);
  }
  void backward(std::span<const Tensor* const>, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    (*gi[0])[index_] += go[0];
  }

 private:
  bool max_;
  std::size_t index_ = 0;
};

// ---------------------------------------------------------------- linear algebra

class MatMulOp final : public Op {
 public:
  std::string_view name() const override { return "matmul"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& a = *in[0];
    const Tensor& b = *in[1];
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    if (a.dim(1) != b.dim(0)) {
      throw ShapeError("matmul inner dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    const auto m = static_cast<Eigen::Index>(a.dim(0));
    const auto k = static_cast<Eigen::Index>(a.dim(1));
    const auto n = static_cast<Eigen::Index>(b.dim(1));
    Tensor out(Shape{a.dim(0), b.dim(1)});
    MapMat(out.ptr(), m, n).noalias() = ConstMapMat(a.ptr(), m, k) * ConstMapMat(b.ptr(), k, n);
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const Tensor& a = *in[0];
    const Tensor& b = *in[1];
    const auto m = static_cast<Eigen::Index>(a.dim(0));
    const auto k = static_cast<Eigen::Index>(a.dim(1));
    const auto n = static_cast<Eigen::Index>(b.dim(1));
    ConstMapMat g(go.ptr(), m, n);
    if (gi[0]) MapMat(gi[0]->ptr(), m, k).noalias() += g * ConstMapMat(b.ptr(), k, n).transpose();
    if (gi[1]) MapMat(gi[1]->ptr(), k, n).noalias() += ConstMapMat(a.ptr(), m, k).transpose() * g;
  }
};

// Direct im2col convolution, stride 1.
class Conv2dOp final : public Op {
 public:
  explicit Conv2dOp(std::size_t pad) : pad_(pad) {}
  std::string_view name() const override { return "conv2d"; }

  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& x = *in[0];
    const Tensor& w = *in[1];
    require_rank(x, 4, "conv2d input");
    require_rank(w, 4, "conv2d weight");
    if (x.dim(1) != w.dim(1)) {
      throw ShapeError("conv2d channel mismatch: input " + to_string(x.shape()) + ", weight " + to_string(w.shape()));
    }
    n_ = x.dim(0);
    c_ = x.dim(1);
    h_ = x.dim(2);
    w_ = x.dim(3);
    o_ = w.dim(0);
    kh_ = w.dim(2);
    kw_ = w.dim(3);
    if (h_ + 2 * pad_ < kh_ || w_ + 2 * pad_ < kw_) throw ShapeError("conv2d kernel larger than padded input");
    oh_ = h_ + 2 * pad_ - kh_ + 1;
    ow_ = w_ + 2 * pad_ - kw_ + 1;
    const std::size_t rows = c_ * kh_ * kw_;
    const std::size_t cols = oh_ * ow_;
    cols_.assign(n_ * rows * cols, 0.0f);
    Tensor out(Shape{n_, o_, oh_, ow_});
    ConstMapMat wm(w.ptr(), static_cast<Eigen::Index>(o_), static_cast<Eigen::Index>(rows));
    for (std::size_t n = 0; n < n_; ++n) {
      float* col = cols_.data() + n * rows * cols;
      im2col(x.ptr() + n * c_ * h_ * w_, col);
      MapMat(out.ptr() + n * o_ * cols, static_cast<Eigen::Index>(o_), static_cast<Eigen::Index>(cols)).noalias() =
          wm * ConstMapMat(col, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    }
    return out;
  }

  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const Tensor& w = *in[1];
    const std::size_t rows = c_ * kh_ * kw_;
    const std::size_t cols = oh_ * ow_;
    const auto er = static_cast<Eigen::Index>(rows);
    const auto ec = static_cast<Eigen::Index>(cols);
    const auto eo = static_cast<Eigen::Index>(o_);
    ConstMapMat wm(w.ptr(), eo, er);
    RowMat dcol(er, ec);
    for (std::size_t n = 0; n < n_; ++n) {
      ConstMapMat g(go.ptr() + n * o_ * cols, eo, ec);
      const float* col = cols_.data() + n * rows * cols;
      if (gi[1]) MapMat(gi[1]->ptr(), eo, er).noalias() += g * ConstMapMat(col, er, ec).transpose();
      if (gi[0]) {
        dcol.noalias() = wm.transpose() * g;
        col2im(dcol.data(), gi[0]->ptr() + n * c_ * h_ * w_);
      }
    }
  }

 private:
  void im2col(const float* img, float* col) const {
    const std::size_t cols = oh_ * ow_;
    for (std::size_t c = 0; c < c_; ++c) {
      for (std::size_t ki = 0; ki < kh_; ++ki) {
        for (std::size_t kj = 0; kj < kw_; ++kj) {
          float* row = col + ((c * kh_ + ki) * kw_ + kj) * cols;
          for (std::size_t oy = 0; oy < oh_; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ki) - static_cast<std::ptrdiff_t>(pad_);
            float* dst = row + oy * ow_;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h_)) {
              std::fill(dst, dst + ow_, 0.0f);
              continue;
            }
            const float* src = img + (c * h_ + static_cast<std::size_t>(iy)) * w_;
            for (std::size_t ox = 0; ox < ow_; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kj) - static_cast<std::ptrdiff_t>(pad_);
              dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w_)) ? 0.0f : src[ix];
            }
          }
        }
      }
    }
  }

  void col2im(const float* col, float* img) const {
    const std::size_t cols = oh_ * ow_;
    for (std::size_t c = 0; c < c_; ++c) {
      for (std::size_t ki = 0; ki < kh_; ++ki) {
        for (std::size_t kj = 0; kj < kw_; ++kj) {
          const float* row = col + ((c * kh_ + ki) * kw_ + kj) * cols;
          for (std::size_t oy = 0; oy < oh_; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ki) - static_cast<std::ptrdiff_t>(pad_);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h_)) continue;
            float* dst = img + (c * h_ + static_cast<std::size_t>(iy)) * w_;
            const float* src = row + oy * ow_;
            for (std::size_t ox = 0; ox < ow_; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kj) - static_cast<std::ptrdiff_t>(pad_);
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w_)) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }

  std::size_t pad_;
  std::size_t n_ = 0, c_ = 0, h_ = 0, w_ = 0, o_ = 0, kh_ = 0, kw_ = 0, oh_ = 0, ow_ = 0;
  std::vector<float> cols_;
};

class AddBiasOp final : public Op {
 public:
  std::string_view name() const override { return "add_bias"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& x = *in[0];
    const Tensor& b = *in[1];
    if (x.rank() < 2 || b.rank() != 1 || b.dim(0) != x.dim(1)) {
      throw ShapeError("add_bias: input " + to_string(x.shape()) + ", bias " + to_string(b.shape()));
    }
    Tensor out = x;
    const std::size_t inner = x.size() / (x.dim(0) * x.dim(1));
    float* o = out.ptr();
    for (std::size_t n = 0; n < x.dim(0); ++n) {
      for (std::size_t c = 0; c < x.dim(1); ++c) {
        const float bc = b[c];
        for (std::size_t i = 0; i < inner; ++i) *o++ += bc;
      }
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const Tensor& x = *in[0];
    if (gi[0]) {
      for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += go[i];
    }
    if (gi[1]) {
      const std::size_t inner = x.size() / (x.dim(0) * x.dim(1));
      const float* g = go.ptr();
      for (std::size_t n = 0; n < x.dim(0); ++n) {
        for (std::size_t c = 0; c < x.dim(1); ++c) {
          double acc = 0.0;
          for (std::size_t i = 0; i < inner; ++i) acc += *g++;
          (*gi[1])[c] += static_cast<float>(acc);
        }
      }
    }
  }
};

class MaxPoolOp final : public Op {
 public:
  explicit MaxPoolOp(std::size_t k) : k_(k) {}
  std::string_view name() const override { return "max_pool2d"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& x = *in[0];
    require_rank(x, 4, "max_pool2d");
    if (k_ == 0 || x.dim(2) % k_ != 0 || x.dim(3) % k_ != 0) {
      throw ShapeError("max_pool2d: spatial size " + to_string(x.shape()) + " not divisible by " + std::to_string(k_));
    }
    const std::size_t planes = x.dim(0) * x.dim(1);
    const std::size_t h = x.dim(2), w = x.dim(3), oh = h / k_, ow = w / k_;
    Tensor out(Shape{x.dim(0), x.dim(1), oh, ow});
    argmax_.assign(out.size(), 0);
    for (std::size_t p = 0; p < planes; ++p) {
      const float* src = x.ptr() + p * h * w;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          std::size_t best = (oy * k_) * w + ox * k_;
          for (std::size_t a = 0; a < k_; ++a) {
            for (std::size_t b = 0; b < k_; ++b) {
              const std::size_t idx = (oy * k_ + a) * w + ox * k_ + b;
              if (src[idx] > src[best]) best = idx;
            }
          }
          const std::size_t o = (p * oh + oy) * ow + ox;
          out[o] = src[best];
          argmax_[o] = p * h * w + best;
        }
      }
    }
    return out;
  }
  void backward(std::span<const Tensor* const>, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    for (std::size_t o = 0; o < go.size(); ++o) (*gi[0])[argmax_[o]] += go[o];
  }

 private:
  std::size_t k_;
  std::vector<std::size_t> argmax_;
};

// cols == 0: fixed target shape; otherwise [N, cols] keeping the leading axis.
class ReshapeOp final : public Op {
 public:
  explicit ReshapeOp(Shape shape, std::size_t cols = 0) : shape_(std::move(shape)), cols_(cols) {}
  std::string_view name() const override { return "reshape"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    Shape target = shape_;
    if (cols_ != 0) {
      if (in[0]->rank() == 0) throw ShapeError("reshape_rows on a scalar");
      target = {in[0]->dim(0), cols_};
    }
    if (numel(target) != in[0]->size()) {
      throw ShapeError("reshape " + to_string(in[0]->shape()) + " -> " + to_string(target));
    }
    return in[0]->reshaped(target);
  }
  void backward(std::span<const Tensor* const>, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += go[i];
  }

 private:
  Shape shape_;
  std::size_t cols_;
};

// ---------------------------------------------------------------- broadcasting

class PerSampleOp final : public Op {
 public:
  explicit PerSampleOp(bool multiply) : multiply_(multiply) {}
  std::string_view name() const override { return multiply_ ? "mul_per_sample" : "add_per_sample"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& x = *in[0];
    const Tensor& s = *in[1];
    if (x.rank() < 1 || s.rank() != 1 || s.dim(0) != x.dim(0)) {
      throw ShapeError(std::string(name()) + ": input " + to_string(x.shape()) + ", per-sample " +
                       to_string(s.shape()));
    }
    Tensor out(x.shape());
    const std::size_t inner = x.dim(0) ? x.size() / x.dim(0) : 0;
    for (std::size_t n = 0; n < x.dim(0); ++n) {
      const float v = s[n];
      const float* src = x.ptr() + n * inner;
      float* dst = out.ptr() + n * inner;
      if (multiply_) {
        for (std::size_t i = 0; i < inner; ++i) dst[i] = src[i] * v;
      } else {
        for (std::size_t i = 0; i < inner; ++i) dst[i] = src[i] + v;
      }
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const Tensor& x = *in[0];
    const Tensor& s = *in[1];
    const std::size_t inner = x.dim(0) ? x.size() / x.dim(0) : 0;
    for (std::size_t n = 0; n < x.dim(0); ++n) {
      const float* g = go.ptr() + n * inner;
      if (gi[0]) {
        float* dx = gi[0]->ptr() + n * inner;
        const float v = multiply_ ? s[n] : 1.0f;
        for (std::size_t i = 0; i < inner; ++i) dx[i] += g[i] * v;
      }
      if (gi[1]) {
        double acc = 0.0;
        if (multiply_) {
          const float* src = x.ptr() + n * inner;
          for (std::size_t i = 0; i < inner; ++i) acc += static_cast<double>(g[i]) * src[i];
        } else {
          for (std::size_t i = 0; i < inner; ++i) acc += g[i];
        }
        (*gi[1])[n] += static_cast<float>(acc);
      }
    }
  }

 private:
  bool multiply_;
};

class ChannelOp final : public Op {
 public:
  explicit ChannelOp(std::size_t c) : c_(c) {}
  std::string_view name() const override { return "channel"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& x = *in[0];
    require_rank(x, 4, "channel");
    if (c_ >= x.dim(1)) throw ShapeError("channel index " + std::to_string(c_) + " out of range for " + to_string(x.shape()));
    const std::size_t plane = x.dim(2) * x.dim(3);
    Tensor out(Shape{x.dim(0), 1, x.dim(2), x.dim(3)});
    for (std::size_t n = 0; n < x.dim(0); ++n) {
      const float* src = x.ptr() + (n * x.dim(1) + c_) * plane;
      std::copy(src, src + plane, out.ptr() + n * plane);
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const Tensor& x = *in[0];
    const std::size_t plane = x.dim(2) * x.dim(3);
    for (std::size_t n = 0; n < x.dim(0); ++n) {
      float* dst = gi[0]->ptr() + (n * x.dim(1) + c_) * plane;
      const float* g = go.ptr() + n * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += g[i];
    }
  }

 private:
  std::size_t c_;
};

class ConcatChannelsOp final : public Op {
 public:
  std::string_view name() const override { return "concat_channels"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    if (in.empty()) throw ShapeError("concat_channels of nothing");
    const Tensor& first = *in[0];
    require_rank(first, 4, "concat_channels");
    std::size_t channels = 0;
    for (const Tensor* t : in) {
      require_rank(*t, 4, "concat_channels");
      if (t->dim(0) != first.dim(0) || t->dim(2) != first.dim(2) || t->dim(3) != first.dim(3)) {
        throw ShapeError("concat_channels: " + to_string(first.shape()) + " vs " + to_string(t->shape()));
      }
      channels += t->dim(1);
    }
    const std::size_t plane = first.dim(2) * first.dim(3);
    Tensor out(Shape{first.dim(0), channels, first.dim(2), first.dim(3)});
    float* dst = out.ptr();
    for (std::size_t n = 0; n < first.dim(0); ++n) {
      for (const Tensor* t : in) {
        const std::size_t len = t->dim(1) * plane;
        const float* src = t->ptr() + n * len;
        dst = std::copy(src, src + len, dst);
      }
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const std::size_t plane = in[0]->dim(2) * in[0]->dim(3);
    const float* g = go.ptr();
    for (std::size_t n = 0; n < in[0]->dim(0); ++n) {
      for (std::size_t k = 0; k < in.size(); ++k) {
        const std::size_t len = in[k]->dim(1) * plane;
        if (gi[k]) {
          float* dst = gi[k]->ptr() + n * len;
          for (std::size_t i = 0; i < len; ++i) dst[i] += g[i];
        }
        g += len;
      }
    }
  }
};

class SelectRowOp final : public Op {
 public:
  explicit SelectRowOp(std::size_t row) : row_(row) {}
  std::string_view name() const override { return "select_row"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& m = *in[0];
    require_rank(m, 2, "select_row");
    if (row_ >= m.dim(0)) throw ShapeError("select_row " + std::to_string(row_) + " of " + to_string(m.shape()));
    const std::size_t cols = m.dim(1);
    return Tensor(Shape{cols}, std::vector<float>(m.ptr() + row_ * cols, m.ptr() + (row_ + 1) * cols));
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const std::size_t cols = in[0]->dim(1);
    for (std::size_t j = 0; j < cols; ++j) (*gi[0])[row_ * cols + j] += go[j];
  }

 private:
  std::size_t row_;
};

// inputs: w, t_1..t_n
class WeightedSumOp final : public Op {
 public:
  std::string_view name() const override { return "weighted_sum"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& w = *in[0];
    const std::size_t n = in.size() - 1;
    if (n == 0) throw ShapeError("weighted_sum of zero tensors");
    if (w.rank() != 1 || w.dim(0) != n) {
      throw ShapeError("weighted_sum: weights " + to_string(w.shape()) + " for " + std::to_string(n) + " tensors");
    }
    for (std::size_t k = 1; k <= n; ++k) require_same_shape(*in[1], *in[k], "weighted_sum");
    Tensor out(in[1]->shape());
    for (std::size_t k = 1; k <= n; ++k) {
      const float wk = w[k - 1];
      const Tensor& t = *in[k];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += wk * t[i];
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const Tensor& w = *in[0];
    for (std::size_t k = 1; k < in.size(); ++k) {
      const Tensor& t = *in[k];
      if (gi[0]) {
        double acc = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) acc += static_cast<double>(go[i]) * t[i];
        (*gi[0])[k - 1] += static_cast<float>(acc);
      }
      if (gi[k]) {
        const float wk = w[k - 1];
        for (std::size_t i = 0; i < t.size(); ++i) (*gi[k])[i] += wk * go[i];
      }
    }
  }
};

// ---------------------------------------------------------------- sampling

class GridSampleOp final : public Op {
 public:
  std::string_view name() const override { return "grid_sample"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& img = *in[0];
    const Tensor& grid = *in[1];
    require_rank(img, 4, "grid_sample image");
    require_rank(grid, 4, "grid_sample grid");
    if (grid.dim(0) != img.dim(0) || grid.dim(3) != 2) {
      throw ShapeError("grid_sample: image " + to_string(img.shape()) + ", grid " + to_string(grid.shape()));
    }
    const std::size_t n_ = img.dim(0), c_ = img.dim(1), h = img.dim(2), w = img.dim(3);
    const std::size_t oh = grid.dim(1), ow = grid.dim(2);
    Tensor out(Shape{n_, c_, oh, ow});
    for (std::size_t n = 0; n < n_; ++n) {
      for (std::size_t p = 0; p < oh * ow; ++p) {
        const float y = grid[(n * oh * ow + p) * 2];
        const float x = grid[(n * oh * ow + p) * 2 + 1];
        const Taps t = taps(y, x, h, w);
        for (std::size_t c = 0; c < c_; ++c) {
          const float* src = img.ptr() + (n * c_ + c) * h * w;
          out[(n * c_ + c) * oh * ow + p] = t.sample(src, w);
        }
      }
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const Tensor& img = *in[0];
    const Tensor& grid = *in[1];
    const std::size_t n_ = img.dim(0), c_ = img.dim(1), h = img.dim(2), w = img.dim(3);
    const std::size_t oh = grid.dim(1), ow = grid.dim(2);
    for (std::size_t n = 0; n < n_; ++n) {
      for (std::size_t p = 0; p < oh * ow; ++p) {
        const float y = grid[(n * oh * ow + p) * 2];
        const float x = grid[(n * oh * ow + p) * 2 + 1];
        const Taps t = taps(y, x, h, w);
        double gy = 0.0, gx = 0.0;
        for (std::size_t c = 0; c < c_; ++c) {
          const float g = go[(n * c_ + c) * oh * ow + p];
          if (g == 0.0f) continue;
          const float* src = img.ptr() + (n * c_ + c) * h * w;
          if (gi[0]) {
            float* dst = gi[0]->ptr() + (n * c_ + c) * h * w;
            for (int k = 0; k < 4; ++k) {
              if (t.valid[k]) dst[t.index[k]] += g * t.weight[k];
            }
          }
          const float v00 = t.value(src, 0), v01 = t.value(src, 1), v10 = t.value(src, 2), v11 = t.value(src, 3);
          gy += static_cast<double>(g) * ((1.0f - t.fx) * (v10 - v00) + t.fx * (v11 - v01));
          gx += static_cast<double>(g) * ((1.0f - t.fy) * (v01 - v00) + t.fy * (v11 - v10));
        }
        if (gi[1]) {
          (*gi[1])[(n * oh * ow + p) * 2] += static_cast<float>(gy);
          (*gi[1])[(n * oh * ow + p) * 2 + 1] += static_cast<float>(gx);
        }
      }
    }
  }

 private:
  // Four bilinear taps ordered (y0,x0), (y0,x1), (y1,x0), (y1,x1).
  struct Taps {
    std::size_t index[4];
    float weight[4];
    bool valid[4];
    float fy, fx;
    float value(const float* src, int k) const { return valid[k] ? src[index[k]] : 0.0f; }
    float sample(const float* src, std::size_t) const {
      float acc = 0.0f;
      for (int k = 0; k < 4; ++k) {
        if (valid[k] && weight[k] != 0.0f) acc += weight[k] * src[index[k]];
      }
      return acc;
    }
  };

  static Taps taps(float y, float x, std::size_t h, std::size_t w) {
    Taps t{};
    const float y0f = std::floor(y), x0f = std::floor(x);
    t.fy = y - y0f;
    t.fx = x - x0f;
    const long y0 = static_cast<long>(y0f), x0 = static_cast<long>(x0f);
    const long ys[4] = {y0, y0, y0 + 1, y0 + 1};
    const long xs[4] = {x0, x0 + 1, x0, x0 + 1};
    t.weight[0] = (1.0f - t.fy) * (1.0f - t.fx);
    t.weight[1] = (1.0f - t.fy) * t.fx;
    t.weight[2] = t.fy * (1.0f - t.fx);
    t.weight[3] = t.fy * t.fx;
    for (int k = 0; k < 4; ++k) {
      t.valid[k] = ys[k] >= 0 && ys[k] < static_cast<long>(h) && xs[k] >= 0 && xs[k] < static_cast<long>(w);
      t.index[k] = t.valid[k] ? static_cast<std::size_t>(ys[k]) * w + static_cast<std::size_t>(xs[k]) : 0;
    }
    return t;
  }
};

// ---------------------------------------------------------------- losses

void softmax_row(const float* logits, std::size_t k, double* probs) {
  double mx = logits[0];
  for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(logits[j]));
  double z = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    probs[j] = std::exp(static_cast<double>(logits[j]) - mx);
    z += probs[j];
  }
  for (std::size_t j = 0; j < k; ++j) probs[j] /= z;
}

class SoftmaxCrossEntropyOp final : public Op {
 public:
  explicit SoftmaxCrossEntropyOp(std::vector<int> labels) : labels_(std::move(labels)) {}
  std::string_view name() const override { return "softmax_cross_entropy"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& logits = *in[0];
    require_rank(logits, 2, "softmax_cross_entropy");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels_.size() != n) {
      throw ShapeError("softmax_cross_entropy: " + std::to_string(labels_.size()) + " labels for logits " +
                       to_string(logits.shape()));
    }
    probs_.assign(n * k, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int y = labels_[i];
      if (y < 0 || static_cast<std::size_t>(y) >= k) throw InvalidArgument("label " + std::to_string(y) + " out of range");
      softmax_row(logits.ptr() + i * k, k, probs_.data() + i * k);
      total -= std::log(std::max(probs_[i * k + static_cast<std::size_t>(y)], std::numeric_limits<double>::min()));
    }
    return Tensor::scalar(static_cast<float>(n ? total / static_cast<double>(n) : 0.0));
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const std::size_t n = in[0]->dim(0), k = in[0]->dim(1);
    const double scale = static_cast<double>(go[0]) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        double g = probs_[i * k + j] - (static_cast<int>(j) == labels_[i] ? 1.0 : 0.0);
        (*gi[0])[i * k + j] += static_cast<float>(g * scale);
      }
    }
  }

 private:
  std::vector<int> labels_;
  std::vector<double> probs_;
};

class SoftmaxKlOp final : public Op {
 public:
  std::string_view name() const override { return "softmax_kl"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& p = *in[0];
    const Tensor& q = *in[1];
    require_rank(p, 2, "softmax_kl");
    require_same_shape(p, q, "softmax_kl");
    const std::size_t n = p.dim(0), k = p.dim(1);
    pp_.assign(n * k, 0.0);
    qq_.assign(n * k, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      softmax_row(p.ptr() + i * k, k, pp_.data() + i * k);
      softmax_row(q.ptr() + i * k, k, qq_.data() + i * k);
      for (std::size_t j = 0; j < k; ++j) {
        const double a = pp_[i * k + j];
        const double b = std::max(qq_[i * k + j], std::numeric_limits<double>::min());
        if (a > 0.0) total += a * (std::log(a) - std::log(b));
      }
    }
    return Tensor::scalar(static_cast<float>(n ? std::max(0.0, total) / static_cast<double>(n) : 0.0));
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& go,
                std::span<Tensor* const> gi) override {
    const std::size_t n = in[0]->dim(0), k = in[0]->dim(1);
    const double scale = static_cast<double>(go[0]) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double* a = pp_.data() + i * k;
      const double* b = qq_.data() + i * k;
      if (gi[1]) {
        for (std::size_t j = 0; j < k; ++j) (*gi[1])[i * k + j] += static_cast<float>((b[j] - a[j]) * scale);
      }
      if (gi[0]) {
        // d/dp_logits of sum a (log a - log b) = a * (r - E_a[r]) with r = log a - log b
        double mean_r = 0.0;
        std::vector<double> r(k);
        for (std::size_t j = 0; j < k; ++j) {
          r[j] = std::log(std::max(a[j], std::numeric_limits<double>::min())) -
                 std::log(std::max(b[j], std::numeric_limits<double>::min()));
          mean_r += a[j] * r[j];
        }
        for (std::size_t j = 0; j < k; ++j) {
          (*gi[0])[i * k + j] += static_cast<float>(a[j] * (r[j] - mean_r) * scale);
        }
      }
    }
  }

 private:
  std::vector<double> pp_, qq_;
};

}  // namespace

NodeId add(Graph& g, NodeId a, NodeId b) { return g.apply(std::make_unique<BinaryOp>(Binary::Add), {a, b}); }
NodeId sub(Graph& g, NodeId a, NodeId b) { return g.apply(std::make_unique<BinaryOp>(Binary::Sub), {a, b}); }
NodeId mul(Graph& g, NodeId a, NodeId b) { return g.apply(std::make_unique<BinaryOp>(Binary::Mul), {a, b}); }
NodeId div(Graph& g, NodeId a, NodeId b) { return g.apply(std::make_unique<BinaryOp>(Binary::Div), {a, b}); }

NodeId add_scalar(Graph& g, NodeId a, float s) { return g.apply(std::make_unique<UnaryOp>(Unary::AddScalar, s), {a}); }
NodeId mul_scalar(Graph& g, NodeId a, float s) { return g.apply(std::make_unique<UnaryOp>(Unary::MulScalar, s), {a}); }
NodeId exp(Graph& g, NodeId a) { return g.apply(std::make_unique<UnaryOp>(Unary::Exp), {a}); }
NodeId log(Graph& g, NodeId a) { return g.apply(std::make_unique<UnaryOp>(Unary::Log), {a}); }
NodeId relu(Graph& g, NodeId a) { return g.apply(std::make_unique<UnaryOp>(Unary::Relu), {a}); }

NodeId clamp(Graph& g, NodeId a, float lo, float hi) {
  if (!(lo <= hi)) throw InvalidArgument("clamp with lo > hi");
  return g.apply(std::make_unique<ClampOp>(lo, hi), {a});
}

NodeId sum(Graph& g, NodeId a) { return g.apply(std::make_unique<SumOp>(false), {a}); }
NodeId mean(Graph& g, NodeId a) { return g.apply(std::make_unique<SumOp>(true), {a}); }
NodeId reduce_max(Graph& g, NodeId a) { return g.apply(std::make_unique<ExtremumOp>(true), {a}); }
NodeId reduce_min(Graph& g, NodeId a) { return g.apply(std::make_unique<ExtremumOp>(false), {a}); }

NodeId matmul(Graph& g, NodeId a, NodeId b) { return g.apply(std::make_unique<MatMulOp>(), {a, b}); }
NodeId conv2d(Graph& g, NodeId x, NodeId w, std::size_t pad) { return g.apply(std::make_unique<Conv2dOp>(pad), {x, w}); }
NodeId add_bias(Graph& g, NodeId x, NodeId b) { return g.apply(std::make_unique<AddBiasOp>(), {x, b}); }
NodeId max_pool2d(Graph& g, NodeId x, std::size_t k) { return g.apply(std::make_unique<MaxPoolOp>(k), {x}); }
NodeId reshape(Graph& g, NodeId x, Shape shape) { return g.apply(std::make_unique<ReshapeOp>(std::move(shape)), {x}); }
NodeId reshape_rows(Graph& g, NodeId x, std::size_t cols) {
  if (cols == 0) throw InvalidArgument("reshape_rows needs a positive column count");
  return g.apply(std::make_unique<ReshapeOp>(Shape{}, cols), {x});
}

NodeId add_per_sample(Graph& g, NodeId x, NodeId s) { return g.apply(std::make_unique<PerSampleOp>(false), {x, s}); }
NodeId mul_per_sample(Graph& g, NodeId x, NodeId s) { return g.apply(std::make_unique<PerSampleOp>(true), {x, s}); }

NodeId channel(Graph& g, NodeId x, std::size_t c) { return g.apply(std::make_unique<ChannelOp>(c), {x}); }
NodeId concat_channels(Graph& g, std::vector<NodeId> parts) {
  return g.apply(std::make_unique<ConcatChannelsOp>(), std::move(parts));
}

NodeId select_row(Graph& g, NodeId m, std::size_t i) { return g.apply(std::make_unique<SelectRowOp>(i), {m}); }

NodeId weighted_sum(Graph& g, NodeId w, std::vector<NodeId> tensors) {
  std::vector<NodeId> inputs;
  inputs.reserve(tensors.size() + 1);
  inputs.push_back(w);
  inputs.insert(inputs.end(), tensors.begin(), tensors.end());
  return g.apply(std::make_unique<WeightedSumOp>(), std::move(inputs));
}

NodeId grid_sample(Graph& g, NodeId img, NodeId grid) { return g.apply(std::make_unique<GridSampleOp>(), {img, grid}); }

NodeId softmax_cross_entropy(Graph& g, NodeId logits, std::vector<int> labels) {
  return g.apply(std::make_unique<SoftmaxCrossEntropyOp>(std::move(labels)), {logits});
}

NodeId softmax_kl(Graph& g, NodeId p_logits, NodeId q_logits) {
  return g.apply(std::make_unique<SoftmaxKlOp>(), {p_logits, q_logits});
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows expects [N, K], got " + to_string(logits.shape()));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = logits.ptr() + i * k;
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

std::vector<double> cross_entropy_rows(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || labels.size() != logits.dim(0)) {
    throw ShapeError("cross_entropy_rows: logits " + to_string(logits.shape()) + " with " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<double> probs(k), out(n);
  for (std::size_t i = 0; i < n; ++i) {
    softmax_row(logits.ptr() + i * k, k, probs.data());
    out[i] = -std::log(std::max(probs[static_cast<std::size_t>(labels[i])], std::numeric_limits<double>::min()));
  }
  return out;
}

std::vector<double> kl_rows(const Tensor& p_logits, const Tensor& q_logits) {
  require_same_shape(p_logits, q_logits, "kl_rows");
  const std::size_t n = p_logits.dim(0), k = p_logits.dim(1);
  std::vector<double> a(k), b(k), out(n);
  for (std::size_t i = 0; i < n; ++i) {
    softmax_row(p_logits.ptr() + i * k, k, a.data());
    softmax_row(q_logits.ptr() + i * k, k, b.data());
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (a[j] > 0.0) total += a[j] * (std::log(a[j]) - std::log(std::max(b[j], std::numeric_limits<double>::min())));
    }
    out[i] = std::max(0.0, total);
  }
  return out;
}

}  // namespace caa::ad
