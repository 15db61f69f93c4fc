#include <gtest/gtest.h>

#include <algorithm>

#include "deepstreet/evaluation.hpp"
#include "deepstreet/synthetic.hpp"

namespace deepstreet {
namespace {

TEST(Gridiron, EvenWidthCoversExactlyTwoColumns) {
  GridironParams p;
  p.spacing_px = 16;
  p.offset_col = 4;
  p.offset_row = 4;
  const Tile t = gridiron_tile(64, p);
  EXPECT_TRUE(road_channels_valid(t));
  // Vertical street centred on the boundary at col 4 covers cols 3 and 4.
  for (int r : {0, 1, 2}) {
    EXPECT_TRUE(is_road_pixel(t, r, 3));
    EXPECT_TRUE(is_road_pixel(t, r, 4));
    EXPECT_FALSE(is_road_pixel(t, r, 2));
    EXPECT_FALSE(is_road_pixel(t, r, 5));
  }
  EXPECT_TRUE(is_road_pixel(t, 3, 10));  // horizontal street at row boundary 4
  EXPECT_FALSE(is_road_pixel(t, 5, 10));
}

TEST(Gridiron, OddWidthCentresOnPixels) {
  GridironParams p;
  p.width_px = 1;
  p.spacing_px = 10;
  const Tile t = gridiron_tile(32, p);
  int road_cols = 0;
  for (int c = 0; c < 32; ++c) road_cols += is_road_pixel(t, 5, c);
  EXPECT_EQ(road_cols, 4);  // cols 0, 10, 20, 30
}

TEST(Gridiron, TopoRampAndMajorStreets) {
  GridironParams p;
  p.major_every = 2;
  const Tile t = gridiron_tile(64, p, 200, 100);
  EXPECT_EQ(t.at(kTopo, 0, 5), 200);
  EXPECT_EQ(t.at(kTopo, 63, 5), 100);
  bool saw_class1 = false;
  for (int c = 0; c < 64; ++c) saw_class1 = saw_class1 || (t.at(kRoadMajor, 32, c) == 255 && t.at(kRoadMinor, 32, c) == 0);
  EXPECT_TRUE(saw_class1);
}

TEST(Gridiron, SeededTileSets) {
  const auto a = gridiron_tiles(5, 64, 11);
  EXPECT_EQ(a, gridiron_tiles(5, 64, 11));
  EXPECT_NE(a, gridiron_tiles(5, 64, 12));
  for (const auto& t : a) EXPECT_TRUE(road_channels_valid(t));
}

TEST(Blank, NoRoads) {
  const Tile t = blank_tile(16, 90);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) ASSERT_FALSE(is_road_pixel(t, r, c));
  EXPECT_EQ(t.at(kTopo, 3, 3), 90);
}

TEST(Scramble, PermutesPixelsKeepingChannelsTogether) {
  const Tile t = gridiron_tile(32, {});
  const Tile s = scramble_pixels(t, 4);
  EXPECT_NE(s, t);
  EXPECT_EQ(s, scramble_pixels(t, 4));
  auto triples = [](const Tile& x) {
    std::vector<std::array<int, 3>> out;
    for (int r = 0; r < x.height; ++r)
      for (int c = 0; c < x.width; ++c) out.push_back({x.at(0, r, c), x.at(1, r, c), x.at(2, r, c)});
    std::sort(out.begin(), out.end());
    return out;
  };
  EXPECT_EQ(triples(s), triples(t));
}

TEST(SyntheticCity, HasCoreAndBlankCountryside) {
  const SyntheticCity city = synthetic_city(384, 384, 2);
  EXPECT_TRUE(road_channels_valid(city.raster.image));
  const auto& img = city.raster.image;
  int core = 0, corner = 0;
  for (int r = 144; r < 240; ++r)
    for (int c = 144; c < 240; ++c) core += is_road_pixel(img, r, c);
  for (int r = 0; r < 48; ++r)
    for (int c = 0; c < 48; ++c) corner += is_road_pixel(img, r, c);
  EXPECT_GT(core, 96 * 96 / 10);
  EXPECT_LT(corner, core);
  EXPECT_EQ(city.dem.cell_size_m, 6.0 * city.raster.geometry.pixel_size_m);
  std::uint8_t lo = 255, hi = 0;
  for (std::uint8_t v : img.plane(kTopo)) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_LT(lo, hi);
}

}  // namespace
}  // namespace deepstreet
