#include "caa/training/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "caa/diffengine/graph.hpp"
#include "caa/error.hpp"
#include "caa/rng.hpp"

namespace caa::training {

LabeledImages LabeledImages::subset(std::span<const std::size_t> indices) const {
  LabeledImages out;
  ad::Shape shape = images.shape();
  shape[0] = indices.size();
  out.images = ad::Tensor(shape);
  const std::size_t stride = images.size() / images.dim(0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= size()) throw InvalidArgument("subset index " + std::to_string(src) + " out of range");
    std::copy(images.ptr() + src * stride, images.ptr() + (src + 1) * stride, out.images.ptr() + i * stride);
    out.labels.push_back(labels[src]);
  }
  return out;
}

LabeledImages LabeledImages::head(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return subset(idx);
}

void Dataset::validate() const {
  for (const LabeledImages* part : {&train, &test}) {
    if (part->images.rank() != 4 || part->images.dim(0) != part->labels.size()) {
      throw FormatError("dataset images and labels disagree in count");
    }
    for (int y : part->labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
        throw FormatError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
      }
    }
    for (float v : part->images.data()) {
      if (!(v >= 0.0f && v <= 1.0f)) throw FormatError("pixel value outside [0, 1]");
    }
  }
}

namespace {

constexpr std::size_t kSide = 32;

bool inside_shape(int cls, double dy, double dx, double r) {
  switch (cls) {
    case 0:  // circle
      return dx * dx + dy * dy <= r * r;
    case 1:  // square
      return std::abs(dx) <= 0.8 * r && std::abs(dy) <= 0.8 * r;
    case 2: {  // upward triangle
      const double top = -r, bottom = 0.75 * r;
      if (dy < top || dy > bottom) return false;
      const double half = r * (dy - top) / (bottom - top);
      return std::abs(dx) <= half;
    }
    default: {  // cross
      const double arm = 0.3 * r;
      return (std::abs(dx) <= arm && std::abs(dy) <= r) || (std::abs(dy) <= arm && std::abs(dx) <= r);
    }
  }
}

float quantize(double v) {
  // Same arithmetic as the CIFAR-10 reader so files round-trip exactly.
  return static_cast<float>(std::round(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f;
}

LabeledImages synthetic_split(Rng& rng, std::size_t n) {
  LabeledImages out;
  out.images = ad::Tensor({n, 3, kSide, kSide});
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.labels[i] = static_cast<int>(i % 4);
  rng.shuffle(std::span<int>(out.labels));
  const std::size_t plane = kSide * kSide;
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = out.labels[i];
    // Foreground color from random hue; background a darker random gray.
    const double h = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double s = rng.uniform(0.5, 1.0);
    const double v = rng.uniform(0.6, 1.0);
    std::array<double, 3> fg{};
    {
      const double hp = h / (std::numbers::pi / 3.0);
      const double c = v * s;
      const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
      const int sector = std::min(5, static_cast<int>(hp));
      const std::array<std::array<double, 3>, 6> table = {{{c, x, 0}, {x, c, 0}, {0, c, x}, {0, x, c}, {x, 0, c}, {c, 0, x}}};
      for (int k = 0; k < 3; ++k) fg[k] = table[sector][k] + (v - c);
    }
    const double bg = rng.uniform(0.05, 0.35);
    const double r = rng.uniform(7.0, 10.0);
    const double cy = 15.5 + rng.uniform(-4.0, 4.0);
    const double cx = 15.5 + rng.uniform(-4.0, 4.0);
    float* img = out.images.ptr() + i * 3 * plane;
    for (std::size_t y = 0; y < kSide; ++y) {
      for (std::size_t x = 0; x < kSide; ++x) {
        const bool in = inside_shape(cls, static_cast<double>(y) - cy, static_cast<double>(x) - cx, r);
        for (int k = 0; k < 3; ++k) {
          const double noise = 0.02 * rng.normal();
          img[k * plane + y * kSide + x] = quantize((in ? fg[k] : bg) + noise);
        }
      }
    }
  }
  return out;
}

}  // namespace

Dataset generate_synthetic_dataset(std::uint64_t seed, std::size_t n_train, std::size_t n_test) {
  if (n_train == 0 || n_test == 0) throw InvalidArgument("synthetic dataset needs at least one train and test image");
  Dataset d;
  d.num_classes = 4;
  d.class_names = {"circle", "square", "triangle", "cross"};
  Rng train_rng = Rng::stream(seed, 0);
  Rng test_rng = Rng::stream(seed, 1);
  d.train = synthetic_split(train_rng, n_train);
  d.test = synthetic_split(test_rng, n_test);
  return d;
}

LabeledImages read_cifar10_batch(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open CIFAR-10 batch " + file.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR-10 batch " + file.string() + " has " + std::to_string(bytes.size()) +
                      " bytes, not a positive multiple of " + std::to_string(kCifarRecordBytes) + " (truncated?)");
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  LabeledImages out;
  out.images = ad::Tensor({n, 3, 32, 32});
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw FormatError("CIFAR-10 batch " + file.string() + ": record " + std::to_string(i) + " has label " +
                        std::to_string(rec[0]));
    }
    out.labels[i] = rec[0];
    float* img = out.images.ptr() + i * 3072;
    for (std::size_t k = 0; k < 3072; ++k) img[k] = static_cast<float>(rec[1 + k]) / 255.0f;
  }
  return out;
}

void write_cifar10_batch(const LabeledImages& data, const std::filesystem::path& file) {
  const ad::Tensor& x = data.images;
  if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != 32 || x.dim(3) != 32 || x.dim(0) != data.size()) {
    throw FormatError("CIFAR-10 layout needs [N, 3, 32, 32] images, got " + ad::to_string(x.shape()));
  }
  std::vector<unsigned char> bytes(data.size() * kCifarRecordBytes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    unsigned char* rec = bytes.data() + i * kCifarRecordBytes;
    if (data.labels[i] < 0 || data.labels[i] > 9) {
      throw FormatError("CIFAR-10 label " + std::to_string(data.labels[i]) + " outside 0..9");
    }
    rec[0] = static_cast<unsigned char>(data.labels[i]);
    const float* img = x.ptr() + i * 3072;
    for (std::size_t k = 0; k < 3072; ++k) {
      const float scaled = img[k] * 255.0f;
      const float level = std::round(scaled);
      if (!(level >= 0.0f && level <= 255.0f) || static_cast<float>(level) / 255.0f != img[k]) {
        throw FormatError("pixel value " + std::to_string(img[k]) + " is not a multiple of 1/255");
      }
      rec[1 + k] = static_cast<unsigned char>(level);
    }
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write CIFAR-10 batch " + file.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to CIFAR-10 batch " + file.string());
}

Dataset load_cifar10(const std::filesystem::path& dir) {
  Dataset d;
  d.num_classes = 10;
  d.class_names = {"airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"};
  std::vector<LabeledImages> parts;
  for (int b = 1; b <= 5; ++b) parts.push_back(read_cifar10_batch(dir / ("data_batch_" + std::to_string(b) + ".bin")));
  std::vector<ad::Tensor> tensors;
  for (LabeledImages& p : parts) {
    tensors.push_back(std::move(p.images));
    d.train.labels.insert(d.train.labels.end(), p.labels.begin(), p.labels.end());
  }
  d.train.images = ad::concat_rows(tensors);
  d.test = read_cifar10_batch(dir / "test_batch.bin");
  return d;
}

Dataset generate_rsp_dataset(const Dataset& dataset, std::span<const attack::AttackComponent> pool, std::uint64_t seed) {
  for (const attack::AttackComponent& c : pool) {
    if (!transforms::is_semantic(c.kind)) throw InvalidArgument("random semantic perturbation pool cannot contain linf");
    transforms::validate(c.kind, c.interval);
  }
  Dataset out = dataset;
  if (pool.empty()) return out;
  const std::size_t n = dataset.train.size();
  const std::size_t stride = dataset.train.images.size() / n;
  ad::Shape one = dataset.train.images.shape();
  one[0] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::stream(seed, i);
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    ad::Graph g;
    const ad::NodeId x = g.constant(dataset.train.images.slice_rows(i, 1), "image");
    std::vector<attack::ChainLink> links;
    for (std::size_t k : order) {
      const attack::AttackComponent& c = pool[k];
      links.push_back({c.kind, g.constant(attack::init_delta(c.kind, c.interval, one, rng).delta)});
    }
    const ad::Tensor& y = g.forward(attack::compose_chain(g, x, links));
    std::copy(y.ptr(), y.ptr() + stride, out.train.images.ptr() + i * stride);
  }
  return out;
}

}  // namespace caa::training
