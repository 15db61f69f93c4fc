#include "deepstreet/mask.hpp"

#include <algorithm>
#include <string>

#include "deepstreet/error.hpp"

namespace deepstreet {

void MaskGeometry::validate() const {
  const int half = hole_px / 2;
  if (tile_px <= 0 || hole_px <= 0 || center_min > center_max || center_min - half < 0 ||
      center_max - half + hole_px > tile_px) {
    throw Error("mask geometry places holes outside the tile");
  }
}

Mask::Mask(int tile_px, const HoleRect& hole) : tile_px_(tile_px), hole_(hole) {
  if (tile_px <= 0) throw DimensionError("mask tile size must be positive");
  const bool empty = hole.height == 0 && hole.width == 0;
  if (empty) {
    hole_ = HoleRect{};
    return;
  }
  if (hole.height <= 0 || hole.width <= 0) {
    throw FormatError("mask rectangle " + format_hole(hole) + " has a non-positive extent");
  }
  if (hole.row0 < 0 || hole.col0 < 0 || hole.row0 + hole.height > tile_px || hole.col0 + hole.width > tile_px) {
    throw FormatError("mask rectangle " + format_hole(hole) + " leaves the " + std::to_string(tile_px) + "px tile");
  }
}

ChannelImage Mask::to_image() const {
  ChannelImage image(tile_px_, tile_px_, 1, 255);
  for (int r = hole_.row0; r < hole_.row0 + hole_.height; ++r) {
    for (int c = hole_.col0; c < hole_.col0 + hole_.width; ++c) image.at(0, r, c) = 0;
  }
  return image;
}

Mask Mask::from_image(const ChannelImage& image) {
  if (image.channels != 1 || image.width != image.height) {
    throw FormatError("mask image must be a square single-channel image");
  }
  int r0 = image.height, c0 = image.width, r1 = -1, c1 = -1;
  std::size_t zeros = 0;
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      const std::uint8_t v = image.at(0, r, c);
      if (v != 0 && v != 255) throw FormatError("mask image may only hold 0 and 255");
      if (v == 0) {
        ++zeros;
        r0 = std::min(r0, r);
        c0 = std::min(c0, c);
        r1 = std::max(r1, r);
        c1 = std::max(c1, c);
      }
    }
  }
  if (zeros == 0) return without_hole(image.width);
  const HoleRect hole{r0, c0, r1 - r0 + 1, c1 - c0 + 1};
  if (zeros != static_cast<std::size_t>(hole.height) * hole.width) {
    throw FormatError("mask image zeros do not form a single rectangle");
  }
  return Mask(image.width, hole);
}

Mask mask_centered_at(int center_row, int center_col, const MaskGeometry& geometry) {
  const int half = geometry.hole_px / 2;
  return Mask(geometry.tile_px, HoleRect{center_row - half, center_col - half, geometry.hole_px, geometry.hole_px});
}

Mask random_mask(std::mt19937_64& rng, const MaskGeometry& geometry) {
  geometry.validate();
  std::uniform_int_distribution<int> center(geometry.center_min, geometry.center_max);
  const int row = center(rng);
  const int col = center(rng);
  return mask_centered_at(row, col, geometry);
}

Mask random_mask(std::uint64_t seed, const MaskGeometry& geometry) {
  std::mt19937_64 rng(seed);
  return random_mask(rng, geometry);
}

Mask rect_mask(int row0, int col0, int height, int width, int tile_px) {
  if (height <= 0 || width <= 0) {
    throw FormatError("mask rectangle " + format_hole({row0, col0, height, width}) + " is empty");
  }
  return Mask(tile_px, HoleRect{row0, col0, height, width});
}

Tile apply_mask(const Tile& tile, const Mask& mask, std::uint8_t fill) {
  if (tile.channels != 3 || tile.width != mask.tile_px() || tile.height != mask.tile_px()) {
    throw DimensionError("mask of " + std::to_string(mask.tile_px()) + "px does not match a " +
                         std::to_string(tile.width) + "x" + std::to_string(tile.height) + " tile");
  }
  Tile out = tile;
  const HoleRect& h = mask.hole();
  for (int c : {kRoadMajor, kRoadMinor}) {
    for (int r = h.row0; r < h.row0 + h.height; ++r) {
      std::fill_n(&out.at(c, r, h.col0), h.width, fill);
    }
  }
  return out;
}

}  // namespace deepstreet
