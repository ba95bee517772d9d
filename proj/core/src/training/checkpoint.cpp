#include "caa/training/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "caa/error.hpp"

namespace caa::training {
namespace {

constexpr char kMagic[8] = {'C', 'A', 'A', 'C', 'K', 'P', 'T', '1'};

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  if (params.names.size() != params.tensors.size()) throw InvalidArgument("parameter names and tensors disagree");
  std::string payload;
  payload.reserve(params.parameter_count() * 4);
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const ad::Tensor& t = params.tensors[i];
    tensors.push_back({{"name", params.names[i]}, {"shape", t.shape()}, {"offset", payload.size()},
                       {"bytes", t.size() * 4}});
    for (float v : t.data()) put_u32_le(payload, std::bit_cast<std::uint32_t>(v));
  }
  nlohmann::json manifest = {
      {"format", "caa-checkpoint"},
      {"version", 1},
      {"architecture", params.architecture()},
      {"architecture_hash", hex64(params.architecture_hash())},
      {"channels", params.channels},
      {"side", params.side},
      {"num_classes", params.num_classes},
      {"tensors", tensors},
      {"payload_bytes", payload.size()},
      {"payload_fnv1a64", hex64(fnv1a64(payload.data(), payload.size()))},
      {"metadata", params.metadata},
  };
  const std::string text = manifest.dump();
  std::string header(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) header.push_back(static_cast<char>((len >> (8 * i)) & 0xff));

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("short write to checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string() + ": ";
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError(where + "bad magic");
  const std::uint64_t len = get_u64_le(bytes.data() + 8);
  if (len > bytes.size() - 16) throw FormatError(where + "truncated manifest");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + "manifest is not valid JSON (" + e.what() + ")");
  }
  const unsigned char* payload = bytes.data() + 16 + len;
  const std::size_t payload_size = bytes.size() - 16 - len;

  ModelParams p;
  try {
    if (m.at("format") != "caa-checkpoint" || m.at("version") != 1) throw FormatError(where + "unsupported format");
    p.channels = m.at("channels").get<std::size_t>();
    p.side = m.at("side").get<std::size_t>();
    p.num_classes = m.at("num_classes").get<std::size_t>();
    if (m.at("architecture").get<std::string>() != p.architecture() ||
        m.at("architecture_hash").get<std::string>() != hex64(p.architecture_hash())) {
      throw FormatError(where + "architecture hash mismatch");
    }
    if (m.at("payload_bytes").get<std::size_t>() != payload_size) {
      throw FormatError(where + "payload is " + std::to_string(payload_size) + " bytes, manifest says " +
                        std::to_string(m.at("payload_bytes").get<std::size_t>()));
    }
    if (m.at("payload_fnv1a64").get<std::string>() != hex64(fnv1a64(payload, payload_size))) {
      throw FormatError(where + "payload checksum mismatch");
    }
    std::size_t expected = 0;
    for (const auto& t : m.at("tensors")) {
      const ad::Shape shape = t.at("shape").get<ad::Shape>();
      const std::size_t offset = t.at("offset").get<std::size_t>();
      const std::size_t count = ad::numel(shape);
      if (offset != expected || t.at("bytes").get<std::size_t>() != count * 4 || offset + count * 4 > payload_size) {
        throw FormatError(where + "tensor '" + t.at("name").get<std::string>() + "' has inconsistent offsets");
      }
      ad::Tensor tensor(shape);
      for (std::size_t k = 0; k < count; ++k) {
        const unsigned char* b = payload + offset + 4 * k;
        const std::uint32_t u = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
                                (std::uint32_t{b[3]} << 24);
        tensor[k] = std::bit_cast<float>(u);
      }
      p.names.push_back(t.at("name").get<std::string>());
      p.tensors.push_back(std::move(tensor));
      expected = offset + count * 4;
    }
    if (expected != payload_size) throw FormatError(where + "payload has trailing bytes");
    p.metadata = m.value("metadata", std::map<std::string, std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + "malformed manifest (" + e.what() + ")");
  }
  // Shapes must match the declared architecture.
  Rng dummy(0);
  const ModelParams ref = init_params(p.channels, p.side, p.num_classes, dummy);
  if (ref.names != p.names) throw FormatError(where + "parameter names do not match the architecture");
  for (std::size_t i = 0; i < ref.tensors.size(); ++i) {
    if (ref.tensors[i].shape() != p.tensors[i].shape()) {
      throw FormatError(where + "parameter '" + p.names[i] + "' has shape " + ad::to_string(p.tensors[i].shape()));
    }
  }
  if (!p.all_finite()) throw FormatError(where + "non-finite parameter values");
  return p;
}

}  // namespace caa::training
