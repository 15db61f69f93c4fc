#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "deepstreet/mask.hpp"
#include "deepstreet/network.hpp"
#include "deepstreet/raster.hpp"
#include "deepstreet/training.hpp"

namespace deepstreet {

/// Every pipeline constant in one place. Serialized as flat `key = value`
/// lines with the unit in the key name; `#` starts a comment.
struct PipelineConfig {
  double pixel_size_m = 5.0;
  int tile_px = 256;
  int hole_px = 48;
  int center_min_px = 64;
  int center_max_px = 192;
  int crop_px = 64;
  double network_scale = 0.125;
  bool generator_batch_norm = true;
  bool discriminator_batch_norm = false;

  double alpha = 0.001;
  int batch_size = 8;
  std::int64_t generator_iters = 2000;
  std::int64_t discriminator_iters = 500;
  std::int64_t joint_iters = 2000;
  double adadelta_rho = 0.95;
  double adadelta_epsilon = 1e-6;
  std::int64_t checkpoint_every = 0;
  GeneratorLoss generator_loss = GeneratorLoss::non_saturating;
  int hole_fill = 0;

  double dem_min_m = 0.0;
  double dem_max_m = 511.0;
  double class1_width_m = 20.0;
  double class2_width_m = 12.0;
  double class3_width_m = 8.0;
  double train_fraction = 0.8;

  std::uint64_t seed = 0;
  std::string data_dir = "data";
  std::string checkpoint_dir = "checkpoints";

  // 64 px tiles, 16 px holes centred in [16,48], 32 px local crops.
  static PipelineConfig desk();

  void validate() const;

  MaskGeometry mask_geometry() const;
  NetworkConfig network_config() const;
  TrainConfig train_config() const;
  RoadClassTable road_class_table() const;

  bool operator==(const PipelineConfig&) const = default;
};

// Unknown keys, malformed values and duplicate keys throw FormatError naming
// the line. Keys that are absent keep their defaults.
PipelineConfig parse_config(std::istream& in);
PipelineConfig read_config(const std::filesystem::path& path);

// Every key, in a fixed order, with round-trip-exact numbers.
std::string serialize_config(const PipelineConfig& config);
void write_config(const std::filesystem::path& path, const PipelineConfig& config);

inline constexpr const char* kConfigEnvVar = "DEEPSTREET_CONFIG";

// An explicit path wins; otherwise $DEEPSTREET_CONFIG; otherwise none.
std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::filesystem::path>& explicit_path);

}  // namespace deepstreet
