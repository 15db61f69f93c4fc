#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace deepstreet {

// Channel slots of a tile / city raster.
enum Channel : int { kRoadMajor = 0, kRoadMinor = 1, kTopo = 2 };

constexpr std::uint8_t kBackground = 255;

/// Planar 8-bit image: `channels` planes of `height` x `width` bytes.
struct ChannelImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  ChannelImage() = default;
  ChannelImage(int width, int height, int channels, std::uint8_t fill = 0);

  std::uint8_t& at(int channel, int row, int col) {
    return data[(static_cast<std::size_t>(channel) * height + row) * width + col];
  }
  const std::uint8_t& at(int channel, int row, int col) const {
    return data[(static_cast<std::size_t>(channel) * height + row) * width + col];
  }
  std::span<std::uint8_t> plane(int channel) {
    return {data.data() + static_cast<std::size_t>(channel) * width * height,
            static_cast<std::size_t>(width) * height};
  }
  std::span<const std::uint8_t> plane(int channel) const {
    return {data.data() + static_cast<std::size_t>(channel) * width * height,
            static_cast<std::size_t>(width) * height};
  }

  bool same_geometry(const ChannelImage& other) const {
    return width == other.width && height == other.height && channels == other.channels;
  }
  // Copies a window of every channel.
  ChannelImage crop(int row, int col, int crop_height, int crop_width) const;

  bool operator==(const ChannelImage&) const = default;
};

// A square three-channel sample (road_major, road_minor, topo).
using Tile = ChannelImage;

// PNG codec for 1- (grey) and 3-channel (RGB) images. Channel order is kept:
// plane 0 -> R, plane 1 -> G, plane 2 -> B.
std::vector<std::uint8_t> encode_png(const ChannelImage& image);
ChannelImage decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const ChannelImage& image);
ChannelImage read_png(const std::filesystem::path& path);

}  // namespace deepstreet
