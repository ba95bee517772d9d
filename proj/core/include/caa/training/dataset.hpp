#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "caa/attack/component.hpp"
#include "caa/diffengine/tensor.hpp"

namespace caa::training {

struct LabeledImages {
  ad::Tensor images;        // [N, C, H, W], values in [0, 1]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  LabeledImages subset(std::span<const std::size_t> indices) const;
  LabeledImages head(std::size_t n) const;
};

struct Dataset {
  LabeledImages train;
  LabeledImages test;
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;

  std::size_t channels() const { return train.images.dim(1); }
  std::size_t side() const { return train.images.dim(2); }
  // Throws FormatError when labels or pixel values are out of range.
  void validate() const;
};

// 32x32 RGB images of four shapes (circle, square, triangle, cross) with
// random color, background, size and position. Labels cycle 0..3 before a
// seeded shuffle, so class counts differ by at most one.
Dataset generate_synthetic_dataset(std::uint64_t seed, std::size_t n_train, std::size_t n_test);

inline constexpr std::size_t kCifarRecordBytes = 3073;

// One CIFAR-10 binary batch file: records of 1 label byte followed by 1024
// R, 1024 G and 1024 B bytes (row-major 32x32), scaled by 1/255.
LabeledImages read_cifar10_batch(const std::filesystem::path& file);
// Writes the same layout; images must be [N, 3, 32, 32] with values that
// are multiples of 1/255 and labels in 0..9 (FormatError otherwise).
void write_cifar10_batch(const LabeledImages& data, const std::filesystem::path& file);
// data_batch_1..5.bin and test_batch.bin under `dir`.
Dataset load_cifar10(const std::filesystem::path& dir);

// Each training image gets one random composite perturbation: a uniformly
// random order and a uniform delta per component. The test split is copied.
// Linf components are rejected.
Dataset generate_rsp_dataset(const Dataset& dataset, std::span<const attack::AttackComponent> pool, std::uint64_t seed);

}  // namespace caa::training
