#include "strucdec/image_grid.hpp"

#include <algorithm>
#include <cmath>

namespace strucdec {

RgbImage make_image_grid(const Tensor<float>& images, std::size_t rows, std::size_t cols, PixelScale scale) {
  require_rank(images.shape(), 4, "image grid");
  if (images.dim(1) != 3) throw ShapeError("image grid: expected 3 channels in dim 1, got " + std::to_string(images.dim(1)));
  if (rows == 0 || cols == 0) throw Error("image grid: rows and cols must be positive");
  const std::size_t N = images.dim(0), H = images.dim(2), W = images.dim(3);
  if (N > rows * cols) throw Error("image grid: " + std::to_string(N) + " images do not fit in " + std::to_string(rows) + "x" + std::to_string(cols));

  RgbImage out;
  out.width = cols * (W + kGutter) - kGutter;
  out.height = rows * (H + kGutter) - kGutter;
  out.pixels.assign(out.width * out.height * 3, 255);
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t oy = (n / cols) * (H + kGutter), ox = (n % cols) * (W + kGutter);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          double v = images.at4(n, c, y, x);
          if (scale == PixelScale::Logits) v = 1.0 / (1.0 + std::exp(-v));
          const double q = std::clamp(std::round(255.0 * v), 0.0, 255.0);
          out.pixels[((oy + y) * out.width + ox + x) * 3 + c] = static_cast<std::uint8_t>(q);
        }
      }
    }
  }
  return out;
}

void write_image_grid(const Tensor<float>& images, std::size_t rows, std::size_t cols, const std::filesystem::path& path,
                      PixelScale scale) {
  write_ppm(path, make_image_grid(images, rows, cols, scale));
}

}  // namespace strucdec
