#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "caa/attack/model.hpp"
#include "caa/rng.hpp"

namespace caa::training {

// Parameters of the fixed small CNN:
//   conv(C->16, 3x3, pad 1) + ReLU + maxpool 2
//   conv(16->32, 3x3, pad 1) + ReLU + maxpool 2
//   dense(32 * side/4 * side/4 -> 64) + ReLU
//   dense(64 -> classes)
struct ModelParams {
  std::size_t channels = 3;
  std::size_t side = 32;
  std::size_t num_classes = 10;
  std::vector<std::string> names;
  std::vector<ad::Tensor> tensors;
  std::map<std::string, std::string> metadata;

  std::string architecture() const;
  std::uint64_t architecture_hash() const;
  std::size_t parameter_count() const;
  bool all_finite() const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

std::string architecture_string(std::size_t channels, std::size_t side, std::size_t num_classes);
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash = 0xcbf29ce484222325ull);

// He-normal weights, zero biases. `side` must be divisible by 4.
ModelParams init_params(std::size_t channels, std::size_t side, std::size_t num_classes, Rng& rng);

// Appends the network to a graph. `params` are node ids for the tensors in
// ModelParams order.
ad::NodeId cnn_logits(ad::Graph& g, ad::NodeId images, const std::vector<ad::NodeId>& params,
                      const ModelParams& shape_source);

class CnnModel final : public attack::Model {
 public:
  explicit CnnModel(ModelParams params);
  ad::NodeId logits(ad::Graph& g, ad::NodeId images) const override;
  std::size_t num_classes() const override { return params_.num_classes; }
  const ModelParams& params() const { return params_; }

 private:
  ModelParams params_;
};

// Throws InvalidArgument if `params` was not built for this input/classes.
void check_compatible(const ModelParams& params, std::size_t channels, std::size_t side, std::size_t num_classes);

}  // namespace caa::training
