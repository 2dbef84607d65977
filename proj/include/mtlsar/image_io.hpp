#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mtlsar {

/// Single-channel raster as read from disk. `bit_depth` is 8 or 16.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> pixels;  // row-major
};

void write_png_gray16(const std::string& path, std::size_t width, std::size_t height,
                      const std::vector<std::uint16_t>& pixels);
void write_png_gray8(const std::string& path, std::size_t width, std::size_t height,
                     const std::vector<std::uint8_t>& pixels);
/// Interleaved RGB, 3 bytes per pixel.
void write_png_rgb8(const std::string& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& rgb);

/// Reads 8- or 16-bit grayscale PNG files.
GrayImage read_png_gray(const std::string& path);

}  // namespace mtlsar
