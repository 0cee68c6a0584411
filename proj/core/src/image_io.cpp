#include "visfuse/image_io.hpp"

#include <csetjmp>
#include <cstdio>
#include <memory>

#include <png.h>

#include "visfuse/error.hpp"

namespace visfuse::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError(path.string(), "cannot open");
  return f;
}

// Writes rows of `bit_depth`-bit samples. Rows are big-endian as PNG requires.
void write_png(const std::filesystem::path& path, int width, int height, int color_type,
               int bit_depth, const std::vector<std::vector<png_byte>>& rows) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string(), "png init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string(), "png write failed");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (const auto& row : rows) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::vector<png_byte>> rows;
};

Decoded read_png(const std::filesystem::path& path, bool want_16bit_gray) {
  FilePtr file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string(), "png init failed");
  }
  Decoded out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string(), "png decode failed");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (want_16bit_gray) {
    if (color_type != PNG_COLOR_TYPE_GRAY || depth != 16) {
      png_destroy_read_struct(&png, &info, nullptr);
      throw IoError(path.string(), "expected 16-bit grayscale png");
    }
  } else {
    if (depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
      png_set_gray_to_rgb(png);
    }
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  out.rows.assign(static_cast<std::size_t>(out.height), std::vector<png_byte>(rowbytes));
  for (auto& row : out.rows) png_read_row(png, row.data(), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

void write_png16(const std::filesystem::path& path, const Image16& image) {
  std::vector<std::vector<png_byte>> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) {
    auto& row = rows[static_cast<std::size_t>(y)];
    row.resize(static_cast<std::size_t>(image.width) * 2);
    for (int x = 0; x < image.width; ++x) {
      const std::uint16_t v = image.pixels[static_cast<std::size_t>(y) * image.width + x];
      row[2 * x] = static_cast<png_byte>(v >> 8);
      row[2 * x + 1] = static_cast<png_byte>(v & 0xFF);
    }
  }
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, 16, rows);
}

Image16 read_png16(const std::filesystem::path& path) {
  const Decoded d = read_png(path, true);
  Image16 image{d.width, d.height, {}};
  image.pixels.reserve(static_cast<std::size_t>(d.width) * d.height);
  for (const auto& row : d.rows) {
    for (int x = 0; x < d.width; ++x) {
      image.pixels.push_back(static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1]));
    }
  }
  return image;
}

void write_png_rgb8(const std::filesystem::path& path, const ImageRgb8& image) {
  std::vector<std::vector<png_byte>> rows(static_cast<std::size_t>(image.height));
  const std::size_t stride = static_cast<std::size_t>(image.width) * 3;
  for (int y = 0; y < image.height; ++y) {
    const auto* src = image.pixels.data() + stride * static_cast<std::size_t>(y);
    rows[static_cast<std::size_t>(y)].assign(src, src + stride);
  }
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 8, rows);
}

ImageRgb8 read_png_rgb8(const std::filesystem::path& path) {
  const Decoded d = read_png(path, false);
  ImageRgb8 image{d.width, d.height, {}};
  image.pixels.reserve(static_cast<std::size_t>(d.width) * d.height * 3);
  for (const auto& row : d.rows) image.pixels.insert(image.pixels.end(), row.begin(), row.end());
  return image;
}

}  // namespace visfuse::io
