#pragma once

// Straight-loop reference implementations. Nothing here calls the optimized
// kernels in sdan/ops.hpp; composite oracles are assembled only from the
// scalar loops below.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "sdan/image.hpp"
#include "sdan/metrics.hpp"
#include "sdan/model.hpp"
#include "sdan/tensor.hpp"

namespace sdan::oracle {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0, DType dtype = DType::f64) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape, dtype);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set_flat(i, u(rng));
  return t;
}

// Direct zero-padded cross-correlation, one output element at a time.
inline Tensor conv(const Tensor& x, const Tensor& w, const Tensor* bias,
                   const ConvSpec& s) {
  const Shape in = x.shape();
  const long cin_g = s.in_channels / s.groups;
  const long cout_g = s.out_channels / s.groups;
  const long ph = (s.kernel_h + (s.kernel_h - 1) * (s.dilation - 1) - 1) / 2;
  const long pw = (s.kernel_w + (s.kernel_w - 1) * (s.dilation - 1) - 1) / 2;
  Tensor out(Shape{in.n, static_cast<std::size_t>(s.out_channels), in.h, in.w},
             x.dtype());
  for (std::size_t n = 0; n < in.n; ++n)
    for (long co = 0; co < s.out_channels; ++co)
      for (long y = 0; y < static_cast<long>(in.h); ++y)
        for (long xx = 0; xx < static_cast<long>(in.w); ++xx) {
          double acc = bias ? bias->flat(static_cast<std::size_t>(co)) : 0.0;
          const long grp = co / cout_g;
          for (long ci = 0; ci < cin_g; ++ci)
            for (long ky = 0; ky < s.kernel_h; ++ky)
              for (long kx = 0; kx < s.kernel_w; ++kx) {
                const long sy = y + ky * s.dilation - ph;
                const long sx = xx + kx * s.dilation - pw;
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(in.h) ||
                    sx >= static_cast<long>(in.w)) {
                  continue;
                }
                acc += w.at(co, ci, ky, kx) *
                       x.at(n, grp * cin_g + ci, sy, sx);
              }
          out.set(n, co, y, xx, acc);
        }
  return out;
}

inline Tensor map(const Tensor& a, double (*f)(double)) {
  Tensor out(a.shape(), a.dtype());
  for (std::size_t i = 0; i < a.numel(); ++i) out.set_flat(i, f(a.flat(i)));
  return out;
}

inline double gelu_scalar(double v) {
  return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
}

inline Tensor gelu(const Tensor& a) { return map(a, gelu_scalar); }

inline Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape(), a.dtype());
  for (std::size_t i = 0; i < a.numel(); ++i) out.set_flat(i, a.flat(i) * b.flat(i));
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape(), a.dtype());
  for (std::size_t i = 0; i < a.numel(); ++i) out.set_flat(i, a.flat(i) + b.flat(i));
  return out;
}

inline Tensor concat(const std::vector<Tensor>& parts) {
  std::size_t c = 0;
  for (const Tensor& p : parts) c += p.shape().c;
  const Shape s0 = parts.front().shape();
  Tensor out(Shape{s0.n, c, s0.h, s0.w}, parts.front().dtype());
  for (std::size_t n = 0; n < s0.n; ++n) {
    std::size_t base = 0;
    for (const Tensor& p : parts) {
      for (std::size_t ch = 0; ch < p.shape().c; ++ch)
        for (std::size_t y = 0; y < s0.h; ++y)
          for (std::size_t x = 0; x < s0.w; ++x)
            out.set(n, base + ch, y, x, p.at(n, ch, y, x));
      base += p.shape().c;
    }
  }
  return out;
}

inline Tensor channels(const Tensor& t, std::size_t first, std::size_t count) {
  const Shape s = t.shape();
  Tensor out(Shape{s.n, count, s.h, s.w}, t.dtype());
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t ch = 0; ch < count; ++ch)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x)
          out.set(n, ch, y, x, t.at(n, first + ch, y, x));
  return out;
}

inline Tensor pixel_norm(const Tensor& t, const Tensor& gamma, const Tensor& beta,
                         double eps) {
  const Shape s = t.shape();
  Tensor out(s, t.dtype());
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x) {
        double mean = 0.0;
        for (std::size_t c = 0; c < s.c; ++c) mean += t.at(n, c, y, x);
        mean /= static_cast<double>(s.c);
        double var = 0.0;
        for (std::size_t c = 0; c < s.c; ++c) {
          const double d = t.at(n, c, y, x) - mean;
          var += d * d;
        }
        var /= static_cast<double>(s.c);
        for (std::size_t c = 0; c < s.c; ++c) {
          const double z = (t.at(n, c, y, x) - mean) / std::sqrt(var + eps);
          out.set(n, c, y, x, gamma.flat(c) * z + beta.flat(c));
        }
      }
  return out;
}

inline Tensor pixel_shuffle(const Tensor& t, int r) {
  const Shape s = t.shape();
  const std::size_t rr = static_cast<std::size_t>(r);
  Tensor out(Shape{s.n, s.c / (rr * rr), s.h * rr, s.w * rr}, t.dtype());
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < out.shape().c; ++c)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w)
          for (std::size_t i = 0; i < rr; ++i)
            for (std::size_t j = 0; j < rr; ++j)
              out.set(n, c, h * rr + i, w * rr + j,
                      t.at(n, c * rr * rr + i * rr + j, h, w));
  return out;
}

// ---- model transcriptions -------------------------------------------------

inline Tensor layer(const ConvLayer& l, const Tensor& x) {
  return oracle::conv(x, l.weight.value(), l.spec.has_bias ? &l.bias.value() : nullptr,
              l.spec);
}

inline Tensor star_conv(const Tensor& x, const StarConvLayers& l) {
  const Tensor u = oracle::layer(l.depthwise, x);
  return oracle::add(oracle::layer(l.project, oracle::mul(oracle::gelu(oracle::layer(l.branch_a, u)), oracle::layer(l.branch_b, u))),
             x);
}

inline Tensor sdm(const Tensor& x, const SdmLayers& l) {
  const Tensor f_d1 = oracle::layer(l.distill[0], x);
  const Tensor f_s1 = star_conv(x, l.refine[0]);
  const Tensor f_d2 = oracle::layer(l.distill[1], f_s1);
  const Tensor f_s2 = star_conv(f_s1, l.refine[1]);
  const Tensor f_d3 = oracle::layer(l.distill[2], f_s2);
  const Tensor f_s3 = star_conv(f_s2, l.refine[2]);
  const Tensor f_d4 = oracle::layer(l.distill[3], f_s3);
  return oracle::layer(l.fuse, oracle::concat({f_d1, f_d2, f_d3, f_d4}));
}

inline Tensor mm_lka(const Tensor& x, const MmLkaLayers& l) {
  const std::size_t g = x.shape().c / 4;
  const Tensor g1 = oracle::layer(l.horizontal_dilated, oracle::layer(l.horizontal, oracle::channels(x, 0, g)));
  const Tensor g2 = oracle::layer(l.vertical_dilated, oracle::layer(l.vertical, oracle::channels(x, g, g)));
  const Tensor g3 = oracle::layer(l.square, oracle::channels(x, 2 * g, g));
  const Tensor g4 = oracle::layer(l.square_dilated, oracle::channels(x, 3 * g, g));
  return oracle::mul(oracle::layer(l.fuse, oracle::concat({g1, g2, g3, g4})), x);
}

inline Tensor lka13(const Tensor& x, const Lka13Layers& l) {
  return oracle::mul(oracle::layer(l.pointwise, oracle::layer(l.depthwise_dilated, oracle::layer(l.depthwise, x))),
             x);
}

inline Tensor rsdam(const Tensor& x, const RsdamLayers& l) {
  Tensor h = l.sdm ? sdm(x, *l.sdm) : oracle::gelu(oracle::layer(*l.plain_body, x));
  if (l.mm_lka) h = mm_lka(h, *l.mm_lka);
  if (l.lka13) h = lka13(h, *l.lka13);
  h = oracle::pixel_norm(oracle::layer(l.project, h), l.norm.gamma.value(), l.norm.beta.value(),
                 1e-6);
  return oracle::add(h, x);
}

inline Tensor sdan(const Tensor& img, const SdanLayers& l, const ModelConfig& cfg) {
  std::vector<Tensor> copies(static_cast<std::size_t>(cfg.replicate_n), img);
  const Tensor f0 = oracle::layer(l.head_depthwise, oracle::layer(l.head_pointwise, oracle::concat(copies)));
  std::vector<Tensor> outs;
  Tensor f = f0;
  for (const RsdamLayers& b : l.blocks) {
    f = rsdam(f, b);
    outs.push_back(f);
  }
  Tensor fused = oracle::gelu(oracle::layer(l.fuse, oracle::concat(outs)));
  fused = oracle::layer(l.smooth_depthwise, oracle::layer(l.smooth_pointwise, fused));
  return oracle::pixel_shuffle(oracle::layer(l.reconstruct, oracle::add(fused, f0)), cfg.scale);
}

// ---- kernels ---------------------------------------------------------------

// Full cross-correlation kernel of a k1 conv followed by a dilated k2 conv:
// K[u][v] = sum k1[a][b] * k2[i][j] over a + d*i = u, b + d*j = v.
inline std::vector<double> compose_kernels(const std::vector<double>& k1, int n1,
                                           const std::vector<double>& k2, int n2,
                                           int dilation, int& size) {
  size = n1 + (n2 - 1) * dilation;
  std::vector<double> out(static_cast<std::size_t>(size * size), 0.0);
  for (int a = 0; a < n1; ++a)
    for (int b = 0; b < n1; ++b)
      for (int i = 0; i < n2; ++i)
        for (int j = 0; j < n2; ++j)
          out[static_cast<std::size_t>((a + dilation * i) * size + b + dilation * j)] +=
              k1[static_cast<std::size_t>(a * n1 + b)] *
              k2[static_cast<std::size_t>(i * n2 + j)];
  return out;
}

// ---- optimizer -------------------------------------------------------------

// Scalar Adan, written out longhand.
struct ScalarAdan {
  double lr, b1, b2, b3, eps, wd;
  double m = 0, v = 0, n = 0, g_prev = 0;
  int t = 0;

  double step(double theta, double g) {
    t += 1;
    if (t == 1) g_prev = g;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * (g - g_prev);
    n = b3 * n + (1 - b3) * (g + b2 * (g - g_prev)) * (g + b2 * (g - g_prev));
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    const double nh = n / (1 - std::pow(b3, t));
    g_prev = g;
    return (theta - lr * (mh + b2 * vh) / (std::sqrt(nh) + eps)) / (1 + lr * wd);
  }
};

// ---- metrics ---------------------------------------------------------------

inline double mse_psnr(const Plane& a, const Plane& b, int shave) {
  double sse = 0;
  long count = 0;
  for (int y = shave; y < a.height - shave; ++y)
    for (int x = shave; x < a.width - shave; ++x) {
      sse += (a.at(x, y) - b.at(x, y)) * (a.at(x, y) - b.at(x, y));
      ++count;
    }
  return 10 * std::log10(255.0 * 255.0 / (sse / count));
}

// SSIM with a full 2-D Gaussian window evaluated per position.
inline double ssim(const Plane& a, const Plane& b, int shave) {
  double win[11][11];
  double total = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      win[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      total += win[i][j];
    }
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double sum = 0;
  long count = 0;
  for (int y = shave; y + 11 <= a.height - shave; ++y)
    for (int x = shave; x + 11 <= a.width - shave; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double w = win[i][j] / total;
          const double pa = a.at(x + j, y + i), pb = b.at(x + j, y + i);
          ma += w * pa;
          mb += w * pb;
          saa += w * pa * pa;
          sbb += w * pb * pb;
          sab += w * pa * pb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      sum += ((2 * ma * mb + c1) * (2 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return sum / count;
}

inline Plane random_plane(int w, int h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 255.0);
  Plane p(w, h);
  for (double& v : p.values) v = u(rng);
  return p;
}

// Catmull-Rom weight, written directly from the piecewise cubic with a = -0.5.
inline double catmull_rom(double t) {
  t = std::fabs(t);
  if (t < 1) return 1.5 * t * t * t - 2.5 * t * t + 1;
  if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
  return 0;
}

// Smooth synthetic RGB image: a few low-frequency sinusoids plus a disc.
inline ImageRGB synthetic_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double fx[3], fy[3], ph[3];
  for (int c = 0; c < 3; ++c) {
    fx[c] = 0.02 + 0.08 * u(rng);
    fy[c] = 0.02 + 0.08 * u(rng);
    ph[c] = 6.28 * u(rng);
  }
  ImageRGB img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool disc = (x - w / 2) * (x - w / 2) + (y - h / 3) * (y - h / 3) < (w * w) / 25;
      for (int c = 0; c < 3; ++c) {
        double v = 128 + 90 * std::sin(fx[c] * x + fy[c] * y + ph[c]);
        if (disc) v = 0.5 * v + 60;
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  return img;
}

}  // namespace sdan::oracle
