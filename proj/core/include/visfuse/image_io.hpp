#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace visfuse::io {

struct Image16 {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> pixels;  // row-major
};

struct ImageRgb8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved RGB
};

void write_png16(const std::filesystem::path& path, const Image16& image);
Image16 read_png16(const std::filesystem::path& path);

void write_png_rgb8(const std::filesystem::path& path, const ImageRgb8& image);
/// Any 8-bit PNG; gray and alpha channels are expanded/stripped to RGB.
ImageRgb8 read_png_rgb8(const std::filesystem::path& path);

}  // namespace visfuse::io
