#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "deepstreet/image.hpp"
#include "deepstreet/manifest.hpp"

namespace deepstreet {

// Tile size, hole size and the inclusive range each hole-centre coordinate is
// drawn from.
struct MaskGeometry {
  int tile_px = 256;
  int hole_px = 48;
  int center_min = 64;
  int center_max = 192;

  // 64 px tiles with 16 px holes, centres in [16, 48].
  static MaskGeometry desk() { return {64, 16, 16, 48}; }
  void validate() const;

  bool operator==(const MaskGeometry&) const = default;
};

/// Binary generation-region mask: 0 inside one axis-aligned hole rectangle,
/// 1 elsewhere. A mask with an empty rectangle has no hole.
class Mask {
 public:
  Mask(int tile_px, const HoleRect& hole);
  static Mask without_hole(int tile_px) { return Mask(tile_px, HoleRect{}); }

  int tile_px() const { return tile_px_; }
  const HoleRect& hole() const { return hole_; }
  bool has_hole() const { return hole_.height > 0 && hole_.width > 0; }
  int center_row() const { return hole_.row0 + hole_.height / 2; }
  int center_col() const { return hole_.col0 + hole_.width / 2; }

  bool in_hole(int row, int col) const {
    return row >= hole_.row0 && row < hole_.row0 + hole_.height && col >= hole_.col0 &&
           col < hole_.col0 + hole_.width;
  }
  std::uint8_t value(int row, int col) const { return in_hole(row, col) ? 0 : 1; }
  std::size_t zero_count() const { return static_cast<std::size_t>(hole_.height) * hole_.width; }

  // Single-channel image, 0 in the hole and 255 elsewhere.
  ChannelImage to_image() const;
  // Inverse of to_image(); rejects anything but one zero rectangle.
  static Mask from_image(const ChannelImage& image);

  bool operator==(const Mask&) const = default;

 private:
  int tile_px_ = 0;
  HoleRect hole_;
};

// Hole of geometry.hole_px centred at a uniformly drawn (row, col), each
// coordinate in [center_min, center_max]; spans [c - hole/2, c - hole/2 + hole).
Mask random_mask(std::mt19937_64& rng, const MaskGeometry& geometry = {});
Mask random_mask(std::uint64_t seed, const MaskGeometry& geometry = {});
Mask mask_centered_at(int center_row, int center_col, const MaskGeometry& geometry = {});

// Designer-specified rectangle; throws on empty or out-of-tile rectangles.
Mask rect_mask(int row0, int col0, int height, int width, int tile_px = 256);

// Replaces both road channels inside the hole with `fill`; the topo channel
// and everything outside the hole are untouched.
Tile apply_mask(const Tile& tile, const Mask& mask, std::uint8_t fill = 0);

}  // namespace deepstreet
