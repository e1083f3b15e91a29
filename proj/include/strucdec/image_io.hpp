#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace strucdec {

/// 8-bit RGB raster, row-major, interleaved.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary P6, maxval 255.
void write_ppm(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_ppm(const std::filesystem::path& path);

}  // namespace strucdec
