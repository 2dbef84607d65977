#include "mtlsar/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include "mtlsar/error.hpp"

namespace mtlsar {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

void png_warning_handler(png_structp, png_const_charp) {}

void write_png(const std::string& path, std::size_t width, std::size_t height, int bit_depth, int color_type,
               const std::vector<png_bytep>& rows) {
  File file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorKind::io, "cannot open " + path + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_handler);
  if (png == nullptr) throw Error(ErrorKind::io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};
  if (info == nullptr) throw Error(ErrorKind::io, "png_create_info_struct failed");
  // libpng reports failures by longjmp; nothing with a destructor is created past this point.
  if (setjmp(png_jmpbuf(png))) throw Error(ErrorKind::io, "png: failed writing " + path);

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // host little-endian -> PNG big-endian
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
}

}  // namespace

void write_png_gray16(const std::string& path, std::size_t width, std::size_t height,
                      const std::vector<std::uint16_t>& pixels) {
  require(pixels.size() == width * height, "write_png_gray16: pixel count mismatch");
  std::vector<std::uint16_t> copy = pixels;
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = reinterpret_cast<png_bytep>(copy.data() + y * width);
  write_png(path, width, height, 16, PNG_COLOR_TYPE_GRAY, rows);
}

void write_png_gray8(const std::string& path, std::size_t width, std::size_t height,
                     const std::vector<std::uint8_t>& pixels) {
  require(pixels.size() == width * height, "write_png_gray8: pixel count mismatch");
  std::vector<std::uint8_t> copy = pixels;
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = copy.data() + y * width;
  write_png(path, width, height, 8, PNG_COLOR_TYPE_GRAY, rows);
}

void write_png_rgb8(const std::string& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& rgb) {
  require(rgb.size() == 3 * width * height, "write_png_rgb8: pixel count mismatch");
  std::vector<std::uint8_t> copy = rgb;
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = copy.data() + 3 * y * width;
  write_png(path, width, height, 8, PNG_COLOR_TYPE_RGB, rows);
}

GrayImage read_png_gray(const std::string& path) {
  File file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorKind::io, "cannot open " + path);

  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw Error(ErrorKind::data, path + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_handler);
  if (png == nullptr) throw Error(ErrorKind::io, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};
  if (info == nullptr) throw Error(ErrorKind::io, "png_create_info_struct failed");

  GrayImage image;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  int color_type = 0;
  int depth = 0;
  // libpng reports failures by longjmp; nothing with a destructor is created past this point.
  if (setjmp(png_jmpbuf(png))) throw Error(ErrorKind::data, "png: failed reading " + path);

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  image.width = png_get_image_width(png, info);
  image.height = png_get_image_height(png, info);
  color_type = png_get_color_type(png, info);
  depth = png_get_bit_depth(png, info);
  if (color_type != PNG_COLOR_TYPE_GRAY || (depth != 8 && depth != 16)) {
    png_error(png, "expected 8- or 16-bit grayscale");
  }
  image.bit_depth = depth;
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);

  const std::size_t row_bytes = png_get_rowbytes(png, info);
  buffer.resize(row_bytes * image.height);
  rows.resize(image.height);
  for (std::size_t y = 0; y < image.height; ++y) rows[y] = buffer.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  image.pixels.resize(image.width * image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      if (depth == 16) {
        std::uint16_t v;
        std::memcpy(&v, rows[y] + 2 * x, 2);
        image.pixels[y * image.width + x] = v;
      } else {
        image.pixels[y * image.width + x] = rows[y][x];
      }
    }
  }
  return image;
}

}  // namespace mtlsar
