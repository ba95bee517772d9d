#pragma once

#include <filesystem>

#include "caa/training/cnn.hpp"

namespace caa::training {

// File layout: the 8-byte magic "CAACKPT1", a little-endian u64 manifest
// length, a JSON manifest (architecture, architecture hash, parameter names,
// shapes and byte offsets, payload checksum, metadata), then the payload of
// little-endian f32 values in parameter order.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);

// Validates magic, manifest, architecture hash, payload length and checksum
// before returning; throws FormatError / IoError otherwise.
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace caa::training
