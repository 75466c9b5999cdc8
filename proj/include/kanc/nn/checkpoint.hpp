#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "kanc/nn/network.hpp"

namespace kanc::nn {

inline constexpr std::string_view kCheckpointVersion = "kanc-v1";

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  double final_loss = 0.0;
  std::string target = "I_D";
};

struct Checkpoint {
  Network network;
  CheckpointMeta meta;
};

// JSON text: version, spec header, metadata, then every parameter array by
// name. Doubles round-trip bit-exactly.
std::string checkpoint_text(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace kanc::nn
