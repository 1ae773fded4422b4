#include "sdan/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "sdan/errors.hpp"

namespace sdan {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);

void require_same_dims(const Plane& a, const Plane& b, const char* op) {
  if (a.width != b.width || a.height != b.height) {
    throw UsageError(std::string(op) + ": plane sizes differ (" +
                     std::to_string(a.width) + "x" + std::to_string(a.height) +
                     " vs " + std::to_string(b.width) + "x" +
                     std::to_string(b.height) + ")");
  }
}

std::vector<double> gaussian_1d() {
  std::vector<double> k(kWindow);
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable "valid" filtering of a plane with the normalized Gaussian.
Plane filter_valid(const Plane& p, const std::vector<double>& k) {
  const int ow = p.width - kWindow + 1;
  const int oh = p.height - kWindow + 1;
  Plane rows(ow, p.height);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * p.at(x + i, y);
      rows.at(x, y) = s;
    }
  Plane out(ow, oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * rows.at(x, y + i);
      out.at(x, y) = s;
    }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out(a.width, a.height);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = a.values[i] * b.values[i];
  }
  return out;
}

}  // namespace

double luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return 16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
}

Plane rgb_to_y(const ImageRGB& img) {
  Plane y(img.width, img.height);
  for (int row = 0; row < img.height; ++row)
    for (int x = 0; x < img.width; ++x) {
      y.at(x, row) = luma(img.at(x, row, 0), img.at(x, row, 1), img.at(x, row, 2));
    }
  return y;
}

Plane shave_plane(const Plane& p, int shave) {
  if (shave < 0 || 2 * shave >= p.width || 2 * shave >= p.height) {
    throw UsageError("shave " + std::to_string(shave) + " too large for " +
                     std::to_string(p.width) + "x" + std::to_string(p.height) +
                     " plane");
  }
  if (shave == 0) return p;
  Plane out(p.width - 2 * shave, p.height - 2 * shave);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(x, y) = p.at(x + shave, y + shave);
  return out;
}

double psnr(const Plane& a, const Plane& b, int shave) {
  require_same_dims(a, b, "psnr");
  const Plane sa = shave_plane(a, shave);
  const Plane sb = shave_plane(b, shave);
  double sse = 0.0;
  for (std::size_t i = 0; i < sa.values.size(); ++i) {
    const double d = sa.values[i] - sb.values[i];
    sse += d * d;
  }
  if (sse == 0.0) return kPsnrIdentical;
  const double mse = sse / static_cast<double>(sa.values.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Plane& a, const Plane& b, int shave) {
  require_same_dims(a, b, "ssim");
  const Plane sa = shave_plane(a, shave);
  const Plane sb = shave_plane(b, shave);
  if (sa.width < kWindow || sa.height < kWindow) {
    throw UsageError("ssim: shaved plane smaller than the 11x11 window");
  }
  const std::vector<double> k = gaussian_1d();
  const Plane mu_a = filter_valid(sa, k);
  const Plane mu_b = filter_valid(sb, k);
  const Plane e_aa = filter_valid(product(sa, sa), k);
  const Plane e_bb = filter_valid(product(sb, sb), k);
  const Plane e_ab = filter_valid(product(sa, sb), k);

  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.values.size(); ++i) {
    const double ma = mu_a.values[i];
    const double mb = mu_b.values[i];
    const double var_a = e_aa.values[i] - ma * ma;
    const double var_b = e_bb.values[i] - mb * mb;
    const double cov = e_ab.values[i] - ma * mb;
    const double num = (2.0 * ma * mb + kC1) * (2.0 * cov + kC2);
    const double den = (ma * ma + mb * mb + kC1) * (var_a + var_b + kC2);
    total += num / den;
  }
  return total / static_cast<double>(mu_a.values.size());
}

ImageMetric evaluate_pair(const std::string& stem, const ImageRGB& reference,
                          const ImageRGB& test, int shave) {
  const Plane ya = rgb_to_y(reference);
  const Plane yb = rgb_to_y(test);
  return ImageMetric{stem, psnr(ya, yb, shave), ssim(ya, yb, shave)};
}

MetricReport summarize(std::vector<ImageMetric> images, int shave) {
  MetricReport report;
  report.shave = shave;
  for (const ImageMetric& m : images) {
    report.mean_psnr += m.psnr_db;
    report.mean_ssim += m.ssim;
  }
  if (!images.empty()) {
    report.mean_psnr /= static_cast<double>(images.size());
    report.mean_ssim /= static_cast<double>(images.size());
  }
  report.images = std::move(images);
  return report;
}

std::string format_metric_line(const ImageMetric& m) {
  char buf[64];
  std::string line = "image=" + m.stem + " psnr=";
  if (std::isinf(m.psnr_db)) {
    line += "inf";
  } else {
    std::snprintf(buf, sizeof(buf), "%.4f", m.psnr_db);
    line += buf;
  }
  std::snprintf(buf, sizeof(buf), " ssim=%.6f", m.ssim);
  return line + buf;
}

}  // namespace sdan
