#include "deepstreet/image.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "deepstreet/error.hpp"

namespace deepstreet {

ChannelImage::ChannelImage(int width_, int height_, int channels_, std::uint8_t fill)
    : width(width_), height(height_), channels(channels_) {
  if (width <= 0 || height <= 0 || channels <= 0) {
    throw DimensionError("image extents must be positive");
  }
  data.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

ChannelImage ChannelImage::crop(int row, int col, int crop_height, int crop_width) const {
  if (row < 0 || col < 0 || crop_height <= 0 || crop_width <= 0 || row + crop_height > height ||
      col + crop_width > width) {
    throw DimensionError("crop window leaves the image");
  }
  ChannelImage out(crop_width, crop_height, channels);
  for (int c = 0; c < channels; ++c) {
    for (int r = 0; r < crop_height; ++r) {
      std::memcpy(&out.at(c, r, 0), &at(c, row + r, col), static_cast<std::size_t>(crop_width));
    }
  }
  return out;
}

namespace {

std::uint32_t png_format_for(int channels) {
  switch (channels) {
    case 1:
      return PNG_FORMAT_GRAY;
    case 3:
      return PNG_FORMAT_RGB;
    default:
      throw FormatError("PNG codec supports 1 or 3 channels, got " + std::to_string(channels));
  }
}

std::vector<std::uint8_t> interleave(const ChannelImage& image) {
  const std::size_t area = static_cast<std::size_t>(image.width) * image.height;
  std::vector<std::uint8_t> out(area * image.channels);
  for (int c = 0; c < image.channels; ++c) {
    const auto plane = image.plane(c);
    for (std::size_t p = 0; p < area; ++p) out[p * image.channels + c] = plane[p];
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const ChannelImage& image) {
  png_image desc;
  std::memset(&desc, 0, sizeof(desc));
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width);
  desc.height = static_cast<png_uint_32>(image.height);
  desc.format = png_format_for(image.channels);

  const auto pixels = interleave(image);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encode failed: ") + desc.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encode failed: ") + desc.message);
  }
  out.resize(size);
  return out;
}

ChannelImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image desc;
  std::memset(&desc, 0, sizeof(desc));
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size())) {
    throw FormatError(std::string("PNG decode failed: ") + desc.message);
  }
  const bool grey = (desc.format & PNG_FORMAT_FLAG_COLOR) == 0;
  desc.format = grey ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int channels = grey ? 1 : 3;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(desc));
  if (!png_image_finish_read(&desc, nullptr, pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG decode failed: ") + desc.message);
  }
  ChannelImage image(static_cast<int>(desc.width), static_cast<int>(desc.height), channels);
  const std::size_t area = static_cast<std::size_t>(image.width) * image.height;
  for (int c = 0; c < channels; ++c) {
    auto plane = image.plane(c);
    for (std::size_t p = 0; p < area; ++p) plane[p] = pixels[p * channels + c];
  }
  return image;
}

void write_png(const std::filesystem::path& path, const ChannelImage& image) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

ChannelImage read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

}  // namespace deepstreet
