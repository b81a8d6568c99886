#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "timecast/nn.hpp"
#include "timecast/optim.hpp"

namespace timecast::nn {

// Checkpoint file layout:
//   magic "TCK1" | version u32 | param count u32 |
//   per parameter: name length u16, UTF-8 name, rank u8, extents u32 each,
//   little-endian float32 data.
// Optimizer state, when present, follows under a literal "STATE" sentinel in
// the same scheme ("step", "m.<name>", "v.<name>").

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Tensor tensor;
};

struct LoadedCheckpoint {
  std::vector<CheckpointEntry> params;
  std::vector<CheckpointEntry> state;
  bool has_state = false;
};

void save_checkpoint(const std::filesystem::path& path, const ParamRefs& params,
                     const AdamW* optimizer = nullptr);

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Binds loaded values onto the model parameters; names, count and shapes
// must match exactly.
void bind_parameters(const LoadedCheckpoint& ckpt, const ParamRefs& params);
void bind_optimizer(const LoadedCheckpoint& ckpt, AdamW& optimizer,
                    const ParamRefs& params);

// FNV-1a 64-bit content hash of a file, as 16 hex chars.
std::string file_content_hash(const std::filesystem::path& path);

}  // namespace timecast::nn
