#pragma once

// Vector roads + elevation model -> three-channel city raster -> tiles.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "deepstreet/image.hpp"

namespace deepstreet {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

enum class RoadClass : int { class1 = 1, class2 = 2, class3 = 3 };

struct RoadSegment {
  std::vector<Point> polyline;  // planar metres
  RoadClass road_class = RoadClass::class3;
  double width_m = 0.0;
};

// Throws FormatError unless the polyline has two points and width_m > 0.
void validate_segment(const RoadSegment& segment);

/// Channel codes and default stroke widths per road class.
///
/// class1 -> (255, 0), class2 -> (0, 255), class3 -> (0, 0); void pixels are
/// (255, 255). Higher classes win where strokes overlap.
struct RoadClassTable {
  std::array<double, 3> width_m{20.0, 12.0, 8.0};

  double default_width(RoadClass road_class) const { return width_m[static_cast<int>(road_class) - 1]; }
  static std::pair<std::uint8_t, std::uint8_t> code(RoadClass road_class);
  // Accepts "class1".."class3" or an OSM highway/railway tag.
  static RoadClass parse_class(const std::string& tag);
};

/// Pixel grid in planar metres. The origin is the top-left corner; rows run
/// towards decreasing y.
struct RasterGeometry {
  int width = 0;
  int height = 0;
  double pixel_size_m = 5.0;
  double origin_x = 0.0;
  double origin_y = 0.0;

  Point pixel_center(int row, int col) const {
    return {origin_x + (col + 0.5) * pixel_size_m, origin_y - (row + 0.5) * pixel_size_m};
  }
};

struct CityRaster {
  RasterGeometry geometry;
  ChannelImage image;  // 3 planes: road_major, road_minor, topo

  explicit CityRaster(const RasterGeometry& geometry);
  CityRaster(const RasterGeometry& geometry, ChannelImage image);
};

// Road channels must hold only 0/255.
bool road_channels_valid(const ChannelImage& image);

struct StrokeStats {
  int segments = 0;
  int skipped_edges = 0;  // zero-length polyline edges
};

// Overwrites the two road channels of `raster`. A pixel gets a class code iff
// its centre lies within width/2 of an edge of that class.
StrokeStats stroke_roads(const std::vector<RoadSegment>& segments, CityRaster& raster);

// Parses one road per line: `LINESTRING (x y, x y, ...)<TAB>class-or-tag[<TAB>width_m]`.
// Blank lines and lines starting with '#' are ignored.
std::vector<RoadSegment> parse_road_lines(std::istream& in, const RoadClassTable& table);
std::vector<RoadSegment> read_road_file(const std::filesystem::path& path, const RoadClassTable& table);
void write_road_file(const std::filesystem::path& path, const std::vector<RoadSegment>& segments);

/// Coarse elevation grid (metres a.s.l.), top-left origin like RasterGeometry.
struct DemGrid {
  int rows = 0;
  int cols = 0;
  double cell_size_m = 30.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  std::vector<double> elevations;  // row-major

  double at(int row, int col) const { return elevations[static_cast<std::size_t>(row) * cols + col]; }
};

// ESRI ASCII grid (.asc) reader/writer.
DemGrid read_ascii_grid(const std::filesystem::path& path);
void write_ascii_grid(const std::filesystem::path& path, const DemGrid& dem);

// Linear, inverted, round-half-up: e_min -> 255, e_max -> 0.
std::uint8_t encode_elevation(double elevation, double e_min, double e_max);

// Fills the topo channel; each DEM cell covers a block of
// (cell_size / pixel_size)^2 raster pixels, which must be 6x6.
void encode_dem(const DemGrid& dem, double e_min, double e_max, CityRaster& raster);

// Raster geometry covering the DEM extent at the given pixel size.
RasterGeometry geometry_for_dem(const DemGrid& dem, double pixel_size_m);

// ---- tiles ------------------------------------------------------------------

enum class Split { train, test };
enum class OverlapPolicy { disjoint, free };

const char* to_string(Split split);
Split parse_split(const std::string& text);
OverlapPolicy parse_overlap_policy(const std::string& text);

struct TileSample {
  int id = 0;
  int row = 0;
  int col = 0;
  int size = 256;
  Split split = Split::train;
  Tile pixels;
};

// Disjoint tiles come from a shuffled index of aligned slots (with one random
// global offset), so no two tiles share a pixel. Free tiles are uniform origins
// with exact repeats rejected. Deterministic for a given seed.
std::vector<TileSample> sample_tiles(const CityRaster& raster, int count, std::uint64_t seed,
                                     OverlapPolicy policy, int tile_px = 256);

// round(train_fraction * tiles); the fraction must lie in (0,1).
std::size_t train_count(std::size_t tiles, double train_fraction);

// Seeded permutation; the first train_count(n, train_fraction) become train.
void split_dataset(std::vector<TileSample>& tiles, double train_fraction, std::uint64_t seed);

}  // namespace deepstreet
