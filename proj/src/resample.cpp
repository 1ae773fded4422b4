#include "sdan/resample.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sdan/errors.hpp"

namespace sdan {

namespace {

constexpr double kA = -0.5;

struct Taps {
  int first = 0;  // unclamped index of the first of four taps
  double weight[4] = {0, 0, 0, 0};
};

std::vector<Taps> build_taps(int in_len, int out_len) {
  std::vector<Taps> taps(static_cast<std::size_t>(out_len));
  const double ratio = static_cast<double>(in_len) / out_len;
  for (int i = 0; i < out_len; ++i) {
    const double src = (i + 0.5) * ratio - 0.5;
    const int base = static_cast<int>(std::floor(src));
    Taps& t = taps[static_cast<std::size_t>(i)];
    t.first = base - 1;
    for (int k = 0; k < 4; ++k) t.weight[k] = cubic_weight(src - (t.first + k));
  }
  return taps;
}

int clamp_index(int i, int len) { return std::clamp(i, 0, len - 1); }

}  // namespace

double cubic_weight(double t) {
  const double x = std::abs(t);
  if (x <= 1.0) return ((kA + 2.0) * x - (kA + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((kA * x - 5.0 * kA) * x + 8.0 * kA) * x - 4.0 * kA;
  return 0.0;
}

ImageRGB bicubic_resize(const ImageRGB& img, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) {
    throw UsageError("bicubic_resize: target size must be positive");
  }
  if (img.width <= 0 || img.height <= 0) {
    throw UsageError("bicubic_resize: empty source image");
  }
  const std::vector<Taps> tx = build_taps(img.width, out_w);
  const std::vector<Taps> ty = build_taps(img.height, out_h);

  // Horizontal pass into a double buffer of size in_h x out_w x 3.
  std::vector<double> rows(static_cast<std::size_t>(img.height) * out_w * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Taps& t = tx[static_cast<std::size_t>(x)];
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (int k = 0; k < 4; ++k) {
          sum += t.weight[k] * img.at(clamp_index(t.first + k, img.width), y, c);
        }
        rows[(static_cast<std::size_t>(y) * out_w + x) * 3 + c] = sum;
      }
    }
  }

  ImageRGB out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const Taps& t = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (int k = 0; k < 4; ++k) {
          const int sy = clamp_index(t.first + k, img.height);
          sum += t.weight[k] * rows[(static_cast<std::size_t>(sy) * out_w + x) * 3 + c];
        }
        out.at(x, y, c) =
            static_cast<std::uint8_t>(std::lround(std::clamp(sum, 0.0, 255.0)));
      }
    }
  }
  return out;
}

}  // namespace sdan
