#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deepstreet/raster.hpp"

namespace deepstreet {

struct HoleRect {
  int row0 = 0;
  int col0 = 0;
  int height = 0;
  int width = 0;

  bool operator==(const HoleRect&) const = default;
};

// "row0,col0,height,width"
std::string format_hole(const HoleRect& hole);
HoleRect parse_hole(const std::string& text);

struct ManifestRecord {
  int id = 0;
  int row = 0;
  int col = 0;
  Split split = Split::train;
  std::string path;  // relative to the manifest's directory
  std::optional<HoleRect> hole;

  bool operator==(const ManifestRecord&) const = default;
};

/// Text index of a tile dataset:
///
///   # deepstreet-manifest v1
///   # pixel_size_m=5
///   # tile_px=256
///   # dem_min_m=0
///   # dem_max_m=511
///   # seed=42
///   id<TAB>row<TAB>col<TAB>split<TAB>path<TAB>hole
///   0<TAB>0<TAB>256<TAB>train<TAB>tiles/000000.png<TAB>-
struct Manifest {
  double pixel_size_m = 5.0;
  int tile_px = 256;
  double dem_min_m = 0.0;
  double dem_max_m = 511.0;
  std::uint64_t seed = 0;
  std::vector<ManifestRecord> records;

  const ManifestRecord* find(int id) const;
  std::vector<const ManifestRecord*> with_split(Split split) const;

  bool operator==(const Manifest&) const = default;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

// Loads the PNG of `record`, resolving its path against the manifest directory.
Tile load_tile(const std::filesystem::path& manifest_path, const ManifestRecord& record);

// Tiles of one split, in manifest order.
std::vector<Tile> load_split(const std::filesystem::path& manifest_path, const Manifest& manifest, Split split);

}  // namespace deepstreet
