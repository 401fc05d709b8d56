#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vaf/nncore.hpp"
#include "vaf/tsva.hpp"

namespace vaf {

inline constexpr int kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "VAFCKPT1";

struct TrainingMetadata {
  int epoch = 0;
  int best_epoch = 0;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::uint64_t dataset_seed = 0;
  std::uint64_t train_seed = 0;
};

struct Checkpoint {
  TsvaModel model;
  std::optional<nn::AdamState> optimizer;
  TrainingMetadata metadata;
};

// Layout: 8-byte magic, uint64 LE header length, JSON header (version,
// config, tensor names/shapes/byte offsets, optimizer scalars, metadata),
// then the raw little-endian float64 blobs.

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vaf
