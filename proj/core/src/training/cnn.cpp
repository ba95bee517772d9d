#include "caa/training/cnn.hpp"

#include <cmath>

#include "caa/diffengine/ops.hpp"
#include "caa/error.hpp"

namespace caa::training {

std::string architecture_string(std::size_t channels, std::size_t side, std::size_t num_classes) {
  return "cnn-v1;in=" + std::to_string(channels) + "x" + std::to_string(side) + "x" + std::to_string(side) +
         ";conv3x3-16;pool2;conv3x3-32;pool2;dense-64;dense-" + std::to_string(num_classes);
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= p[i];
    hash *= 0x100000001b3ull;
  }
  return hash;
}

std::string ModelParams::architecture() const { return architecture_string(channels, side, num_classes); }

std::uint64_t ModelParams::architecture_hash() const {
  const std::string a = architecture();
  return fnv1a64(a.data(), a.size());
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const ad::Tensor& t : tensors) n += t.size();
  return n;
}

bool ModelParams::all_finite() const {
  for (const ad::Tensor& t : tensors) {
    if (!t.all_finite()) return false;
  }
  return true;
}

ModelParams init_params(std::size_t channels, std::size_t side, std::size_t num_classes, Rng& rng) {
  if (channels == 0 || num_classes < 2) throw InvalidArgument("CNN needs channels >= 1 and at least 2 classes");
  if (side == 0 || side % 4 != 0) throw InvalidArgument("CNN input side must be a positive multiple of 4");
  ModelParams p;
  p.channels = channels;
  p.side = side;
  p.num_classes = num_classes;
  const std::size_t flat = 32 * (side / 4) * (side / 4);
  auto he = [&](const std::string& name, ad::Shape shape, std::size_t fan_in) {
    ad::Tensor t(std::move(shape));
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (float& v : t.data()) v = static_cast<float>(sd * rng.normal());
    p.names.push_back(name);
    p.tensors.push_back(std::move(t));
  };
  auto zeros = [&](const std::string& name, std::size_t n) {
    p.names.push_back(name);
    p.tensors.emplace_back(ad::Shape{n}, 0.0f);
  };
  he("conv1.weight", {16, channels, 3, 3}, channels * 9);
  zeros("conv1.bias", 16);
  he("conv2.weight", {32, 16, 3, 3}, 16 * 9);
  zeros("conv2.bias", 32);
  he("fc1.weight", {flat, 64}, flat);
  zeros("fc1.bias", 64);
  he("fc2.weight", {64, num_classes}, 64);
  zeros("fc2.bias", num_classes);
  return p;
}

ad::NodeId cnn_logits(ad::Graph& g, ad::NodeId images, const std::vector<ad::NodeId>& w, const ModelParams& p) {
  if (w.size() != 8) throw InvalidArgument("CNN expects 8 parameter nodes, got " + std::to_string(w.size()));
  ad::NodeId h = ad::add_bias(g, ad::conv2d(g, images, w[0], 1), w[1]);
  h = ad::max_pool2d(g, ad::relu(g, h), 2);
  h = ad::add_bias(g, ad::conv2d(g, h, w[2], 1), w[3]);
  h = ad::max_pool2d(g, ad::relu(g, h), 2);
  const std::size_t flat = 32 * (p.side / 4) * (p.side / 4);
  h = ad::reshape_rows(g, h, flat);
  h = ad::relu(g, ad::add_bias(g, ad::matmul(g, h, w[4]), w[5]));
  return ad::add_bias(g, ad::matmul(g, h, w[6]), w[7]);
}

CnnModel::CnnModel(ModelParams params) : params_(std::move(params)) {
  if (params_.tensors.size() != 8) throw InvalidArgument("CNN parameters must hold 8 tensors");
}

ad::NodeId CnnModel::logits(ad::Graph& g, ad::NodeId images) const {
  std::vector<ad::NodeId> nodes;
  for (std::size_t i = 0; i < params_.tensors.size(); ++i) nodes.push_back(g.constant(params_.tensors[i], params_.names[i]));
  return cnn_logits(g, images, nodes, params_);
}

void check_compatible(const ModelParams& params, std::size_t channels, std::size_t side, std::size_t num_classes) {
  const std::string want = architecture_string(channels, side, num_classes);
  if (params.architecture() != want) {
    throw InvalidArgument("model architecture '" + params.architecture() + "' does not match required '" + want + "'");
  }
}

}  // namespace caa::training
