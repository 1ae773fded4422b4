#pragma once

#include <limits>
#include <string>
#include <vector>

#include "sdan/image.hpp"

namespace sdan {

// Single-channel float image, row-major.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}
  double at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  double& at(int x, int y) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

// Studio-swing BT.601 luma: 16 + (65.481 R + 128.553 G + 24.966 B) / 255.
double luma(std::uint8_t r, std::uint8_t g, std::uint8_t b);
Plane rgb_to_y(const ImageRGB& img);

// Drops `shave` pixels from every border.
Plane shave_plane(const Plane& p, int shave);

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

// 10 log10(255^2 / MSE) over the shaved region; +inf for identical planes.
double psnr(const Plane& a, const Plane& b, int shave);

// Mean single-scale SSIM over all valid 11x11 Gaussian (sigma 1.5) windows of
// the shaved region; K1 = 0.01, K2 = 0.03, L = 255.
double ssim(const Plane& a, const Plane& b, int shave);

struct ImageMetric {
  std::string stem;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<ImageMetric> images;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  int shave = 0;
};

// Y-channel PSNR/SSIM between two equally sized RGB images.
ImageMetric evaluate_pair(const std::string& stem, const ImageRGB& reference,
                          const ImageRGB& test, int shave);
// Fills the aggregate means from `images`.
MetricReport summarize(std::vector<ImageMetric> images, int shave);
// "image=<stem> psnr=<f> ssim=<f>"
std::string format_metric_line(const ImageMetric& m);

}  // namespace sdan
