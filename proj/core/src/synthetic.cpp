#include "deepstreet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "deepstreet/error.hpp"

namespace deepstreet {
namespace {

// Grid streets inside the pixel box [row0,row1) x [col0,col1).
void append_grid(const RasterGeometry& g, const GridironParams& p, int row0, int row1, int col0, int col1,
                 std::vector<RoadSegment>& out) {
  if (p.spacing_px <= 0 || p.width_px <= 0) throw Error("gridiron spacing and width must be positive");
  const double px = g.pixel_size_m;
  const double centre_shift = (p.width_px % 2 == 1) ? 0.5 : 0.0;
  const double width_m = p.width_px * px;
  auto road_class = [&](int k) {
    return (p.major_every > 0 && k % p.major_every == 0) ? RoadClass::class1 : p.road_class;
  };
  const double x_lo = g.origin_x + (col0 - 1) * px, x_hi = g.origin_x + (col1 + 1) * px;
  const double y_hi = g.origin_y - (row0 - 1) * px, y_lo = g.origin_y - (row1 + 1) * px;

  const int first_col = col0 + ((p.offset_col - col0) % p.spacing_px + p.spacing_px) % p.spacing_px;
  for (int c = first_col, k = 0; c < col1; c += p.spacing_px, ++k) {
    const double x = g.origin_x + (c + centre_shift) * px;
    out.push_back({{{x, y_hi}, {x, y_lo}}, road_class(k), width_m});
  }
  const int first_row = row0 + ((p.offset_row - row0) % p.spacing_px + p.spacing_px) % p.spacing_px;
  for (int r = first_row, k = 0; r < row1; r += p.spacing_px, ++k) {
    const double y = g.origin_y - (r + centre_shift) * px;
    out.push_back({{{x_lo, y}, {x_hi, y}}, road_class(k), width_m});
  }
}

RasterGeometry tile_geometry(int tile_px) {
  RasterGeometry g;
  g.width = g.height = tile_px;
  g.pixel_size_m = 5.0;
  g.origin_x = 0.0;
  g.origin_y = tile_px * g.pixel_size_m;
  return g;
}

}  // namespace

std::vector<RoadSegment> gridiron_segments(const RasterGeometry& geometry, const GridironParams& params) {
  std::vector<RoadSegment> out;
  append_grid(geometry, params, 0, geometry.height, 0, geometry.width, out);
  return out;
}

Tile gridiron_tile(int tile_px, const GridironParams& params, std::uint8_t topo_top, std::uint8_t topo_bottom) {
  if (tile_px <= 0) throw DimensionError("tile size must be positive");
  CityRaster raster(tile_geometry(tile_px));
  stroke_roads(gridiron_segments(raster.geometry, params), raster);
  for (int r = 0; r < tile_px; ++r) {
    const double t = tile_px > 1 ? static_cast<double>(r) / (tile_px - 1) : 0.0;
    const auto v = static_cast<std::uint8_t>(std::lround(topo_top + t * (topo_bottom - topo_top)));
    for (int c = 0; c < tile_px; ++c) raster.image.at(kTopo, r, c) = v;
  }
  return raster.image;
}

Tile blank_tile(int tile_px, std::uint8_t topo) {
  if (tile_px <= 0) throw DimensionError("tile size must be positive");
  Tile t(tile_px, tile_px, 3, kBackground);
  std::fill(t.plane(kTopo).begin(), t.plane(kTopo).end(), topo);
  return t;
}

std::vector<Tile> gridiron_tiles(int count, int tile_px, std::uint64_t seed, int spacing_min, int spacing_max) {
  if (count < 0 || spacing_min <= 0 || spacing_max < spacing_min) throw Error("bad gridiron tile parameters");
  std::mt19937_64 rng(seed);
  std::vector<Tile> tiles;
  tiles.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    GridironParams p;
    p.spacing_px = std::uniform_int_distribution<int>(spacing_min, spacing_max)(rng);
    p.offset_row = std::uniform_int_distribution<int>(0, p.spacing_px - 1)(rng);
    p.offset_col = std::uniform_int_distribution<int>(0, p.spacing_px - 1)(rng);
    p.road_class = std::bernoulli_distribution(0.5)(rng) ? RoadClass::class2 : RoadClass::class3;
    const int majors[] = {0, 3, 4};
    p.major_every = majors[std::uniform_int_distribution<int>(0, 2)(rng)];
    const auto top = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(100, 160)(rng));
    const auto bottom = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(100, 160)(rng));
    tiles.push_back(gridiron_tile(tile_px, p, top, bottom));
  }
  return tiles;
}

DemGrid synthetic_dem(int rows, int cols, double cell_size_m, std::uint64_t seed) {
  if (rows <= 0 || cols <= 0 || !(cell_size_m > 0.0)) throw Error("bad DEM dimensions");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Bump {
    double r, c, sigma, height;
  };
  std::vector<Bump> bumps;
  for (int i = 0; i < 5; ++i) {
    bumps.push_back({unit(rng) * rows, unit(rng) * cols, (0.1 + 0.25 * unit(rng)) * std::max(rows, cols),
                     (unit(rng) < 0.3 ? -1.0 : 1.0) * (40.0 + 120.0 * unit(rng))});
  }
  const double tilt_r = 60.0 * unit(rng), tilt_c = 60.0 * unit(rng);

  DemGrid dem;
  dem.rows = rows;
  dem.cols = cols;
  dem.cell_size_m = cell_size_m;
  dem.origin_x = 0.0;
  dem.origin_y = rows * cell_size_m;
  dem.elevations.resize(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double e = 150.0 + tilt_r * r / rows + tilt_c * c / cols;
      for (const auto& b : bumps) {
        const double d2 = (r - b.r) * (r - b.r) + (c - b.c) * (c - b.c);
        e += b.height * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
      }
      dem.elevations[static_cast<std::size_t>(r) * cols + c] = e;
    }
  }
  return dem;
}

SyntheticCity synthetic_city(int width_px, int height_px, std::uint64_t seed, double pixel_size_m) {
  if (width_px < 64 || height_px < 64) throw DimensionError("synthetic city needs at least 64x64 pixels");
  RasterGeometry g;
  g.width = width_px;
  g.height = height_px;
  g.pixel_size_m = pixel_size_m;
  g.origin_x = 0.0;
  g.origin_y = height_px * pixel_size_m;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<RoadSegment> roads;

  // Gridiron core over the central half.
  const int row0 = height_px / 4, row1 = 3 * height_px / 4;
  const int col0 = width_px / 4, col1 = 3 * width_px / 4;
  GridironParams core;
  core.spacing_px = 16;
  core.offset_row = static_cast<int>(unit(rng) * 16);
  core.offset_col = static_cast<int>(unit(rng) * 16);
  core.major_every = 4;
  append_grid(g, core, row0, row1, col0, col1, roads);

  // Ring road around the core.
  const double rx0 = g.origin_x + (col0 - 4) * pixel_size_m, rx1 = g.origin_x + (col1 + 4) * pixel_size_m;
  const double ry0 = g.origin_y - (row0 - 4) * pixel_size_m, ry1 = g.origin_y - (row1 + 4) * pixel_size_m;
  roads.push_back({{{rx0, ry0}, {rx1, ry0}, {rx1, ry1}, {rx0, ry1}, {rx0, ry0}}, RoadClass::class2, 12.0});

  // Winding arterials from the core towards the edges.
  const double cx = g.origin_x + width_px * pixel_size_m / 2.0, cy = g.origin_y - height_px * pixel_size_m / 2.0;
  const double reach = std::max(width_px, height_px) * pixel_size_m;
  for (int i = 0; i < 4; ++i) {
    double heading = (i + unit(rng) * 0.5) * M_PI / 2.0;
    Point p{cx, cy};
    RoadSegment s{{p}, RoadClass::class1, 20.0};
    const double step = 8.0 * pixel_size_m;
    for (double travelled = 0.0; travelled < reach; travelled += step) {
      heading += (unit(rng) - 0.5) * 0.35;
      p = {p.x + step * std::cos(heading), p.y + step * std::sin(heading)};
      s.polyline.push_back(p);
    }
    roads.push_back(std::move(s));
  }

  DemGrid dem = synthetic_dem((height_px + 5) / 6, (width_px + 5) / 6, 6.0 * pixel_size_m, seed ^ 0x5eedULL);
  dem.origin_x = g.origin_x;
  dem.origin_y = g.origin_y;

  SyntheticCity city{std::move(roads), std::move(dem), CityRaster(g)};
  stroke_roads(city.roads, city.raster);
  const auto [lo, hi] = std::minmax_element(city.dem.elevations.begin(), city.dem.elevations.end());
  encode_dem(city.dem, *lo, *hi, city.raster);
  return city;
}

Tile scramble_pixels(const Tile& tile, std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(tile.width) * tile.height;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  Tile out(tile.width, tile.height, tile.channels);
  for (int c = 0; c < tile.channels; ++c) {
    const auto src = tile.plane(c);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < n; ++i) dst[i] = src[order[i]];
  }
  return out;
}

}  // namespace deepstreet
