#pragma once

#include <filesystem>
#include <stdexcept>

#include "gdgt/model.hpp"

namespace gdgt {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, all integers and floats little-endian:
//   8 bytes   magic "GDGTCKPT"
//   u32       format version
//   u64, ...  length-prefixed JSON model configuration (with ablation)
//   u64       parameter count
//   per parameter:
//     u64, ...  length-prefixed UTF-8 name
//     u64       rank, then one u64 per dimension
//     f64 * n   values in row-major order

void save_checkpoint(const std::filesystem::path& path, const GdgtModel& model);

/// Rebuilds the model from the embedded configuration and loads every
/// parameter. Names, shapes and count must match the rebuilt model exactly.
GdgtModel load_checkpoint(const std::filesystem::path& path);

/// As above, but also requires the embedded configuration to equal `expected`.
GdgtModel load_checkpoint(const std::filesystem::path& path, const GdgtConfig& expected);

GdgtConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace gdgt
