#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "slsnet/nn.hpp"

namespace slsnet {

// Binary layout, little-endian:
//
//   "SLSNCKPT"            8 bytes magic
//   u8  version           currently 1
//   u8  value_bytes       sizeof(real) of the writer: 4 or 8
//   u64 step
//   u32 config length, then that many bytes of config text
//   u32 entry count, then per entry:
//     u8  kind            0 parameter, 1 buffer
//     u16 name length, name bytes
//     u32 n, c, h, w
//     values              n*c*h*w reals; parameters follow with the Adam m then v
//
// A checkpoint records parameters, Adam moments and batchnorm statistics
// exactly; save followed by load reproduces every bit.

inline constexpr std::uint8_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint64_t step = 0;
  std::string config_text;
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointInfo& info,
                     const StateRefs& state);

/// Reads only the header: step and config text.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Restores every entry of `state` by name. Throws FormatError on a missing or
/// unknown entry, a shape mismatch, or a precision mismatch.
CheckpointInfo load_checkpoint(const std::filesystem::path& path, StateRefs& state);

}  // namespace slsnet
