#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sdan/tensor.hpp"

namespace sdan {

// 8-bit RGB, row-major, interleaved.
struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  ImageRGB() = default;
  ImageRGB(int w, int h);

  std::uint8_t& at(int x, int y, int ch) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
  std::uint8_t at(int x, int y, int ch) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
  bool operator==(const ImageRGB&) const = default;
};

// Grayscale and alpha inputs are converted to RGB; 16-bit is reduced to 8.
ImageRGB read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageRGB& img);

ImageRGB crop(const ImageRGB& img, int x, int y, int w, int h);

// (1, 3, H, W) with values / 255.
Tensor image_to_tensor(const ImageRGB& img, DType dtype = DType::f32);
// Reads sample `n` of an (N, 3, H, W) tensor in [0,1]; clamps and rounds.
ImageRGB tensor_to_image(const Tensor& t, std::size_t n = 0);

}  // namespace sdan
