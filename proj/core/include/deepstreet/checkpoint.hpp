#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "deepstreet/network.hpp"

namespace deepstreet {

struct TrainingCounters {
  int phase = 0;  // 0 = untrained, 1..3 = last phase that ran
  std::int64_t generator_iters = 0;
  std::int64_t discriminator_iters = 0;
  std::int64_t joint_iters = 0;

  bool operator==(const TrainingCounters&) const = default;
};

/// Binary checkpoint, all integers and floats little-endian:
///
///   "DSCK" u32 version=1 u64 spec_hash f64 scale u32 tile_px u32 crop_px
///   u8 generator_bn u8 discriminator_bn u64 seed
///   u32 phase i64 generator_iters i64 discriminator_iters i64 joint_iters
///   u32 tensor_count, then per tensor:
///     u32 name_len, name bytes, u32 rank, u32 dims[rank], f32 data[...]
///
/// Batch-norm running statistics are stored as "<id>.running_mean" and
/// "<id>.running_var" tensors.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const TrainingCounters& counters);

struct LoadedCheckpoint {
  Model model;
  TrainingCounters counters;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Loads and checks that the stored spec hash equals the one `expected` builds.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const NetworkConfig& expected);

// "ckpt_p<phase>_<iteration, 7 digits>.dsck"
std::string checkpoint_name(int phase, std::int64_t iteration);

}  // namespace deepstreet
