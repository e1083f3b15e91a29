#pragma once

#include <filesystem>

#include "strucdec/image_io.hpp"
#include "strucdec/tensor.hpp"

namespace strucdec {

enum class PixelScale { Logits, Unit };

inline constexpr std::size_t kGutter = 2;

/// Tiles N x 3 x S x S images row-major into a rows x cols grid separated by
/// 2-pixel white gutters. Cells past N stay white. Logits go through a
/// sigmoid; values become round(255 v) clamped to [0, 255].
RgbImage make_image_grid(const Tensor<float>& images, std::size_t rows, std::size_t cols, PixelScale scale = PixelScale::Logits);

void write_image_grid(const Tensor<float>& images, std::size_t rows, std::size_t cols, const std::filesystem::path& path,
                      PixelScale scale = PixelScale::Logits);

}  // namespace strucdec
