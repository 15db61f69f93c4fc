#pragma once

// Procedural street networks for tests, demos and desk-scale training.

#include <cstdint>
#include <vector>

#include "deepstreet/raster.hpp"

namespace deepstreet {

/// Orthogonal street grid. Street centrelines sit on pixel boundaries so a
/// 2-pixel stroke covers exactly two pixel columns (or rows).
struct GridironParams {
  int spacing_px = 16;   // distance between parallel streets
  int offset_row = 0;    // grid phase, in pixels
  int offset_col = 0;
  int width_px = 2;      // stroke width
  RoadClass road_class = RoadClass::class3;
  int major_every = 0;   // every k-th street becomes class1; 0 disables
};

// Streets covering the whole raster extent.
std::vector<RoadSegment> gridiron_segments(const RasterGeometry& geometry, const GridironParams& params);

// A tile_px square tile with the grid stroked in and a linear topo ramp
// running from `topo_top` (row 0) to `topo_bottom` (last row).
Tile gridiron_tile(int tile_px, const GridironParams& params, std::uint8_t topo_top = 140,
                   std::uint8_t topo_bottom = 110);

// Tile with no roads at all and a flat topo channel.
Tile blank_tile(int tile_px, std::uint8_t topo = 128);

// `count` grids with seeded spacing (spacing_min..spacing_max), phase and
// occasional major streets.
std::vector<Tile> gridiron_tiles(int count, int tile_px, std::uint64_t seed, int spacing_min = 12,
                                 int spacing_max = 20);

// A smooth hill-and-valley DEM with the given cell size.
DemGrid synthetic_dem(int rows, int cols, double cell_size_m, std::uint64_t seed);

/// City-sized raster: a gridiron core, winding arterials reaching into blank
/// countryside, and topo from a synthetic DEM (cell size = 6 pixels).
struct SyntheticCity {
  std::vector<RoadSegment> roads;
  DemGrid dem;
  CityRaster raster;
};
SyntheticCity synthetic_city(int width_px, int height_px, std::uint64_t seed, double pixel_size_m = 5.0);

// Randomly permutes pixel positions, moving all three channels together.
Tile scramble_pixels(const Tile& tile, std::uint64_t seed);

}  // namespace deepstreet
