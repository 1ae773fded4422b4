#include "sdan/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "sdan/errors.hpp"

namespace sdan {

ImageRGB::ImageRGB(int w, int h)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

ImageRGB read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw DataError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  ImageRGB img(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw DataError("cannot decode PNG " + path.string() + ": " + message);
  }
  return img;
}

void write_png(const std::filesystem::path& path, const ImageRGB& img) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0,
                               nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

ImageRGB crop(const ImageRGB& img, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 0 || h < 0 || x + w > img.width ||
      y + h > img.height) {
    throw UsageError("crop: window outside image");
  }
  ImageRGB out(w, h);
  for (int row = 0; row < h; ++row) {
    const auto* src = img.pixels.data() +
                      (static_cast<std::size_t>(y + row) * img.width + x) * 3;
    std::copy_n(src, static_cast<std::size_t>(w) * 3,
                out.pixels.data() + static_cast<std::size_t>(row) * w * 3);
  }
  return out;
}

Tensor image_to_tensor(const ImageRGB& img, DType dtype) {
  const std::size_t h = static_cast<std::size_t>(img.height);
  const std::size_t w = static_cast<std::size_t>(img.width);
  Tensor t(Shape{1, 3, h, w}, dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.data<T>();
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          d[(c * h + y) * w + x] =
              static_cast<T>(img.pixels[(y * w + x) * 3 + c] / 255.0);
        }
  });
  return t;
}

ImageRGB tensor_to_image(const Tensor& t, std::size_t n) {
  const Shape& s = t.shape();
  if (s.c != 3 || n >= s.n) {
    throw UsageError("tensor_to_image: expected (N, 3, H, W), got " + s.str());
  }
  ImageRGB img(static_cast<int>(s.w), static_cast<int>(s.h));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x) {
        double v = t.at(n, c, y, x) * 255.0;
        if (!std::isfinite(v)) v = 0.0;
        v = std::clamp(v, 0.0, 255.0);
        img.pixels[(y * s.w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v));
      }
  return img;
}

}  // namespace sdan
