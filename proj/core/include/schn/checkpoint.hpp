#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "schn/network.hpp"

namespace schn {

inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

// On disk: 8-byte magic "SCHNCKPT", u64 little-endian header length, the
// JSON header {format_version, model, tensors[{name, shape, offset, count}],
// extra}, then every tensor as little-endian float32 in header order.
// Offsets and counts are in floats.
struct CheckpointContents {
  SCHConfig config;
  std::vector<NamedTensor> tensors;
  nlohmann::json extra;  // null when absent

  const NamedTensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const CheckpointContents& contents);
CheckpointContents decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const CheckpointContents& contents);
CheckpointContents read_checkpoint(const std::filesystem::path& path);

CheckpointContents model_contents(const SchnModel<float>& model);
// Builds a model from the tensors named like model parameters; validates every
// name and shape before returning.
SchnModel<float> model_from_contents(const CheckpointContents& contents);

inline SchnModel<float> load_model(const std::filesystem::path& path) {
  return model_from_contents(read_checkpoint(path));
}

}  // namespace schn
