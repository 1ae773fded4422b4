#include "sdan/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <string>

#include "sdan/errors.hpp"

namespace sdan {

namespace {

std::atomic<bool> g_deterministic{true};

using Index = std::ptrdiff_t;

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) {
    throw ConfigError(std::string(op) + ": operand mismatch " +
                      a.shape().str() + "/" + dtype_name(a.dtype()) + " vs " +
                      b.shape().str() + "/" + dtype_name(b.dtype()));
  }
}

struct ConvGeometry {
  Index n, cin, cout, h, w;
  Index cin_g, cout_g;
  Index kh, kw, dil, pad_h, pad_w;
};

ConvGeometry geometry(const Shape& in, const ConvSpec& s) {
  ConvGeometry g;
  g.n = static_cast<Index>(in.n);
  g.cin = s.in_channels;
  g.cout = s.out_channels;
  g.h = static_cast<Index>(in.h);
  g.w = static_cast<Index>(in.w);
  g.cin_g = s.in_channels / s.groups;
  g.cout_g = s.out_channels / s.groups;
  g.kh = s.kernel_h;
  g.kw = s.kernel_w;
  g.dil = s.dilation;
  g.pad_h = (s.extent_h() - 1) / 2;
  g.pad_w = (s.extent_w() - 1) / 2;
  return g;
}

// Valid output range [lo, hi) for a tap displaced by `offset` along an axis of
// length `len`.
inline void tap_range(Index offset, Index len, Index& lo, Index& hi) {
  lo = std::max<Index>(0, -offset);
  hi = std::min<Index>(len, len - offset);
}

template <typename T>
void conv_forward(const Tensor& input, const Tensor& weight, const Tensor* bias,
                  const ConvSpec& spec, Tensor& out) {
  const ConvGeometry g = geometry(input.shape(), spec);
  const auto x = input.data<T>();
  const auto wt = weight.data<T>();
  auto y = out.data<T>();
  const Index plane = g.h * g.w;
  const Index jobs = g.n * g.cout;

#pragma omp parallel
  {
    std::vector<double> acc(static_cast<std::size_t>(plane));
#pragma omp for schedule(static)
    for (Index job = 0; job < jobs; ++job) {
      const Index n = job / g.cout;
      const Index co = job % g.cout;
      const Index grp = co / g.cout_g;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (Index cil = 0; cil < g.cin_g; ++cil) {
        const T* src = x.data() + (n * g.cin + grp * g.cin_g + cil) * plane;
        const T* wk = wt.data() + (co * g.cin_g + cil) * g.kh * g.kw;
        for (Index ky = 0; ky < g.kh; ++ky) {
          const Index dy = ky * g.dil - g.pad_h;
          Index y0, y1;
          tap_range(dy, g.h, y0, y1);
          for (Index kx = 0; kx < g.kw; ++kx) {
            const Index dx = kx * g.dil - g.pad_w;
            Index x0, x1;
            tap_range(dx, g.w, x0, x1);
            const double wv = static_cast<double>(wk[ky * g.kw + kx]);
            for (Index yy = y0; yy < y1; ++yy) {
              double* a = acc.data() + yy * g.w;
              const T* s = src + (yy + dy) * g.w + dx;
              for (Index xx = x0; xx < x1; ++xx) {
                a[xx] += wv * static_cast<double>(s[xx]);
              }
            }
          }
        }
      }
      const double b = bias ? bias->data<T>()[co] : 0.0;
      T* dst = y.data() + job * plane;
      for (Index p = 0; p < plane; ++p) dst[p] = static_cast<T>(acc[p] + b);
    }
  }
}

template <typename T>
void conv_backward_input(const Tensor& grad_out, const Tensor& weight,
                         const ConvSpec& spec, Tensor& grad_in) {
  const ConvGeometry g = geometry(grad_in.shape(), spec);
  const auto go = grad_out.data<T>();
  const auto wt = weight.data<T>();
  auto gi = grad_in.data<T>();
  const Index plane = g.h * g.w;
  const Index jobs = g.n * g.cin;

#pragma omp parallel
  {
    std::vector<double> acc(static_cast<std::size_t>(plane));
#pragma omp for schedule(static)
    for (Index job = 0; job < jobs; ++job) {
      const Index n = job / g.cin;
      const Index ci = job % g.cin;
      const Index grp = ci / g.cin_g;
      const Index cil = ci % g.cin_g;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (Index col = 0; col < g.cout_g; ++col) {
        const Index co = grp * g.cout_g + col;
        const T* src = go.data() + (n * g.cout + co) * plane;
        const T* wk = wt.data() + (co * g.cin_g + cil) * g.kh * g.kw;
        for (Index ky = 0; ky < g.kh; ++ky) {
          const Index dy = ky * g.dil - g.pad_h;
          Index y0, y1;
          tap_range(dy, g.h, y0, y1);
          for (Index kx = 0; kx < g.kw; ++kx) {
            const Index dx = kx * g.dil - g.pad_w;
            Index x0, x1;
            tap_range(dx, g.w, x0, x1);
            const double wv = static_cast<double>(wk[ky * g.kw + kx]);
            for (Index yy = y0; yy < y1; ++yy) {
              double* a = acc.data() + (yy + dy) * g.w + dx;
              const T* s = src + yy * g.w;
              for (Index xx = x0; xx < x1; ++xx) {
                a[xx] += wv * static_cast<double>(s[xx]);
              }
            }
          }
        }
      }
      T* dst = gi.data() + job * plane;
      for (Index p = 0; p < plane; ++p) dst[p] = static_cast<T>(acc[p]);
    }
  }
}

// Dot products accumulate into kLanes independent partial sums so the loop
// vectorizes without reassociation; the lane layout and the final reduction
// order are fixed, so results do not depend on the build's SIMD width.
constexpr Index kLanes = 8;

template <typename T>
inline void dot_lanes(const T* a, const T* b, Index len, double* lanes) {
  Index i = 0;
  for (; i + kLanes <= len; i += kLanes) {
    for (Index l = 0; l < kLanes; ++l) {
      lanes[l] += static_cast<double>(a[i + l]) * static_cast<double>(b[i + l]);
    }
  }
  for (Index l = 0; i < len; ++i, ++l) {
    lanes[l] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
}

inline double reduce_lanes(const double* lanes) {
  double sum = 0.0;
  for (Index l = 0; l < kLanes; ++l) sum += lanes[l];
  return sum;
}

template <typename T>
void conv_backward_weight(const Tensor& grad_out, const Tensor& input,
                          const ConvSpec& spec, Tensor& grad_w) {
  const ConvGeometry g = geometry(input.shape(), spec);
  const auto go = grad_out.data<T>();
  const auto x = input.data<T>();
  auto gw = grad_w.data<T>();
  const Index plane = g.h * g.w;

#pragma omp parallel for schedule(static)
  for (Index co = 0; co < g.cout; ++co) {
    const Index grp = co / g.cout_g;
    for (Index cil = 0; cil < g.cin_g; ++cil) {
      const Index ci = grp * g.cin_g + cil;
      for (Index ky = 0; ky < g.kh; ++ky) {
        const Index dy = ky * g.dil - g.pad_h;
        Index y0, y1;
        tap_range(dy, g.h, y0, y1);
        for (Index kx = 0; kx < g.kw; ++kx) {
          const Index dx = kx * g.dil - g.pad_w;
          Index x0, x1;
          tap_range(dx, g.w, x0, x1);
          double lanes[kLanes] = {};
          for (Index n = 0; n < g.n; ++n) {
            const T* gplane = go.data() + (n * g.cout + co) * plane;
            const T* xplane = x.data() + (n * g.cin + ci) * plane;
            for (Index yy = y0; yy < y1; ++yy) {
              dot_lanes(gplane + yy * g.w + x0, xplane + (yy + dy) * g.w + dx + x0,
                        x1 - x0, lanes);
            }
          }
          gw[((co * g.cin_g + cil) * g.kh + ky) * g.kw + kx] =
              static_cast<T>(reduce_lanes(lanes));
        }
      }
    }
  }
}

// 1x1, ungrouped convolution as a blocked matrix product: out[o][p] =
// sum_i m(o, i) * src[i][p], where m reads the weight either as stored
// (forward) or transposed (input gradient). Tiles of kRowBlock outputs by
// kPixelTile pixels stay in registers; every output element still sums over i
// in ascending order.
constexpr Index kRowBlock = 8;
constexpr Index kPixelTile = 16;

template <typename T, bool Transposed>
void pointwise_product(const T* src, Index rows_in, const T* weight,
                       Index rows_out, const T* bias, Index n, Index plane,
                       T* dst) {
  const Index blocks = (rows_out + kRowBlock - 1) / kRowBlock;
  const Index jobs = n * blocks;
#pragma omp parallel
  {
    std::vector<double> packed(static_cast<std::size_t>(rows_in * kRowBlock));
#pragma omp for schedule(static)
    for (Index job = 0; job < jobs; ++job) {
      const Index b = job / blocks;
      const Index o0 = (job % blocks) * kRowBlock;
      const Index count = std::min(kRowBlock, rows_out - o0);
      for (Index i = 0; i < rows_in; ++i) {
        for (Index r = 0; r < kRowBlock; ++r) {
          const Index o = o0 + r;
          packed[i * kRowBlock + r] =
              r < count ? static_cast<double>(Transposed ? weight[i * rows_out + o]
                                                         : weight[o * rows_in + i])
                        : 0.0;
        }
      }
      const T* in = src + b * rows_in * plane;
      T* out = dst + b * rows_out * plane;
      double bv[kRowBlock] = {};
      for (Index r = 0; r < count; ++r) {
        bv[r] = bias ? static_cast<double>(bias[o0 + r]) : 0.0;
      }

      Index p0 = 0;
      for (; p0 + kPixelTile <= plane; p0 += kPixelTile) {
        double acc[kRowBlock][kPixelTile] = {};
        for (Index i = 0; i < rows_in; ++i) {
          const T* xr = in + i * plane + p0;
          double xv[kPixelTile];
#pragma GCC unroll 16
          for (Index p = 0; p < kPixelTile; ++p) xv[p] = static_cast<double>(xr[p]);
          const double* wr = packed.data() + i * kRowBlock;
#pragma GCC unroll 8
          for (Index r = 0; r < kRowBlock; ++r) {
#pragma GCC unroll 16
            for (Index p = 0; p < kPixelTile; ++p) acc[r][p] += wr[r] * xv[p];
          }
        }
        for (Index r = 0; r < count; ++r) {
          T* yr = out + (o0 + r) * plane + p0;
          for (Index p = 0; p < kPixelTile; ++p) {
            yr[p] = static_cast<T>(acc[r][p] + bv[r]);
          }
        }
      }
      for (Index p = p0; p < plane; ++p) {
        double acc[kRowBlock] = {};
        for (Index i = 0; i < rows_in; ++i) {
          const double xv = static_cast<double>(in[i * plane + p]);
          for (Index r = 0; r < kRowBlock; ++r) {
            acc[r] += packed[i * kRowBlock + r] * xv;
          }
        }
        for (Index r = 0; r < count; ++r) {
          out[(o0 + r) * plane + p] = static_cast<T>(acc[r] + bv[r]);
        }
      }
    }
  }
}

// grad_w[o][i] = sum_n sum_p go[n][o][p] * x[n][i][p] over kGradBlock x
// kGradBlock tiles of (o, i). Lanes follow dot_lanes over the flattened plane.
constexpr Index kGradBlock = 4;

template <typename T>
void pointwise_weight_grad(const T* go, Index cout, const T* x, Index cin,
                           Index n, Index plane, T* gw) {
  const Index oblocks = (cout + kGradBlock - 1) / kGradBlock;
  const Index iblocks = (cin + kGradBlock - 1) / kGradBlock;
  const Index jobs = oblocks * iblocks;
#pragma omp parallel for schedule(static)
  for (Index job = 0; job < jobs; ++job) {
    const Index o0 = (job / iblocks) * kGradBlock;
    const Index i0 = (job % iblocks) * kGradBlock;
    const Index ocount = std::min(kGradBlock, cout - o0);
    const Index icount = std::min(kGradBlock, cin - i0);
    double lanes[kGradBlock][kGradBlock][kLanes] = {};
    for (Index b = 0; b < n; ++b) {
      const T* g[kGradBlock];
      const T* xs[kGradBlock];
      // Rows past the edge alias row 0; their sums are discarded.
      for (Index r = 0; r < kGradBlock; ++r) {
        g[r] = go + (b * cout + o0 + (r < ocount ? r : 0)) * plane;
        xs[r] = x + (b * cin + i0 + (r < icount ? r : 0)) * plane;
      }
      Index p = 0;
      for (; p + kLanes <= plane; p += kLanes) {
        double gv[kGradBlock][kLanes];
        double xv[kGradBlock][kLanes];
        for (Index r = 0; r < kGradBlock; ++r) {
          for (Index l = 0; l < kLanes; ++l) {
            gv[r][l] = static_cast<double>(g[r][p + l]);
            xv[r][l] = static_cast<double>(xs[r][p + l]);
          }
        }
        for (Index a = 0; a < kGradBlock; ++a) {
          for (Index c = 0; c < kGradBlock; ++c) {
            for (Index l = 0; l < kLanes; ++l) lanes[a][c][l] += gv[a][l] * xv[c][l];
          }
        }
      }
      for (Index l = 0; p < plane; ++p, ++l) {
        for (Index a = 0; a < kGradBlock; ++a) {
          for (Index c = 0; c < kGradBlock; ++c) {
            lanes[a][c][l] += static_cast<double>(g[a][p]) *
                              static_cast<double>(xs[c][p]);
          }
        }
      }
    }
    for (Index a = 0; a < ocount; ++a) {
      for (Index c = 0; c < icount; ++c) {
        gw[(o0 + a) * cin + i0 + c] = static_cast<T>(reduce_lanes(lanes[a][c]));
      }
    }
  }
}

bool is_plain_pointwise(const ConvSpec& s) {
  return s.kernel_h == 1 && s.kernel_w == 1 && s.groups == 1;
}

void check_conv_inputs(const Tensor& input, const Tensor& weight,
                       const Tensor* bias, const ConvSpec& spec) {
  spec.validate();
  if (input.shape().c != static_cast<std::size_t>(spec.in_channels)) {
    throw ConfigError("conv2d: input has " + std::to_string(input.shape().c) +
                      " channels, spec expects " +
                      std::to_string(spec.in_channels));
  }
  if (weight.shape() != spec.weight_shape()) {
    throw ConfigError("conv2d: weight shape " + weight.shape().str() +
                      " does not match " + spec.weight_shape().str());
  }
  if (weight.dtype() != input.dtype()) {
    throw ConfigError("conv2d: weight dtype differs from input dtype");
  }
  if (bias) {
    if (bias->numel() != static_cast<std::size_t>(spec.out_channels) ||
        bias->dtype() != input.dtype()) {
      throw ConfigError("conv2d: bias must hold " +
                        std::to_string(spec.out_channels) + " values");
    }
  }
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad_scalar(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) * (0.5 * M_2_SQRTPI * M_SQRT1_2);
  return cdf + x * pdf;
}

}  // namespace

void set_deterministic(bool enabled) { g_deterministic = enabled; }
bool deterministic() { return g_deterministic; }

Shape ConvSpec::weight_shape() const {
  return Shape{static_cast<std::size_t>(out_channels),
               static_cast<std::size_t>(in_channels / groups),
               static_cast<std::size_t>(kernel_h),
               static_cast<std::size_t>(kernel_w)};
}

Shape ConvSpec::bias_shape() const {
  return Shape{static_cast<std::size_t>(out_channels), 1, 1, 1};
}

void ConvSpec::validate() const {
  if (kernel_h <= 0 || kernel_w <= 0 || dilation <= 0 || groups <= 0 ||
      in_channels <= 0 || out_channels <= 0) {
    throw ConfigError("conv spec: all extents must be positive");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ConfigError("conv spec: channels " + std::to_string(in_channels) +
                      "->" + std::to_string(out_channels) +
                      " not divisible by groups " + std::to_string(groups));
  }
  if (extent_h() % 2 == 0 || extent_w() % 2 == 0) {
    throw ConfigError("conv spec: effective kernel extent " +
                      std::to_string(extent_h()) + "x" +
                      std::to_string(extent_w()) +
                      " is even; same padding needs odd extents");
  }
}

ConvSpec ConvSpec::pointwise(int in, int out, bool bias) {
  return ConvSpec{1, 1, 1, 1, in, out, bias};
}

ConvSpec ConvSpec::dense(int in, int out, int k, bool bias) {
  return ConvSpec{k, k, 1, 1, in, out, bias};
}

ConvSpec ConvSpec::depthwise(int channels, int kh, int kw, int dilation,
                             bool bias) {
  return ConvSpec{kh, kw, dilation, channels, channels, channels, bias};
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
              const ConvSpec& spec) {
  check_conv_inputs(input, weight, bias, spec);
  const Shape& s = input.shape();
  Tensor out(Shape{s.n, static_cast<std::size_t>(spec.out_channels), s.h, s.w},
             input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    if (is_plain_pointwise(spec)) {
      pointwise_product<T, false>(
          input.data<T>().data(), spec.in_channels, weight.data<T>().data(),
          spec.out_channels, bias ? bias->data<T>().data() : nullptr,
          static_cast<Index>(s.n), static_cast<Index>(s.plane()),
          out.data<T>().data());
    } else {
      conv_forward<T>(input, weight, bias, spec, out);
    }
  });
  return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight,
                             const ConvSpec& spec, const Shape& input_shape) {
  Tensor grad_in(input_shape, grad_out.dtype());
  dispatch(grad_out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    if (is_plain_pointwise(spec)) {
      pointwise_product<T, true>(
          grad_out.data<T>().data(), spec.out_channels, weight.data<T>().data(),
          spec.in_channels, nullptr, static_cast<Index>(input_shape.n),
          static_cast<Index>(input_shape.plane()), grad_in.data<T>().data());
    } else {
      conv_backward_input<T>(grad_out, weight, spec, grad_in);
    }
  });
  return grad_in;
}

Tensor conv2d_backward_weight(const Tensor& grad_out, const Tensor& input,
                              const ConvSpec& spec) {
  Tensor grad_w(spec.weight_shape(), grad_out.dtype());
  dispatch(grad_out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    if (is_plain_pointwise(spec)) {
      const Shape& s = input.shape();
      pointwise_weight_grad<T>(grad_out.data<T>().data(), spec.out_channels,
                               input.data<T>().data(), spec.in_channels,
                               static_cast<Index>(s.n),
                               static_cast<Index>(s.plane()),
                               grad_w.data<T>().data());
    } else {
      conv_backward_weight<T>(grad_out, input, spec, grad_w);
    }
  });
  return grad_w;
}

Tensor conv2d_backward_bias(const Tensor& grad_out, const ConvSpec& spec) {
  Tensor grad_b(spec.bias_shape(), grad_out.dtype());
  const Shape& s = grad_out.shape();
  dispatch(grad_out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto go = grad_out.data<T>();
    auto gb = grad_b.data<T>();
    const std::size_t plane = s.plane();
    for (std::size_t c = 0; c < s.c; ++c) {
      double sum = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = go.data() + (n * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      gb[c] = static_cast<T>(sum);
    }
  });
  return grad_b;
}

Tensor star_product(const Tensor& a, const Tensor& b) {
  require_same(a, b, "star_product");
  Tensor out(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto x = a.data<T>();
    const auto y = b.data<T>();
    auto z = out.data<T>();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Tensor out(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto x = a.data<T>();
    const auto y = b.data<T>();
    auto z = out.data<T>();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
  });
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto x = a.data<T>();
    auto z = out.data<T>();
    const T f = static_cast<T>(factor);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * f;
  });
  return out;
}

void accumulate(Tensor& dst, const Tensor& src) {
  require_same(dst, src, "accumulate");
  dispatch(dst.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = dst.data<T>();
    const auto s = src.data<T>();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  });
}

Tensor gelu(const Tensor& input) {
  Tensor out(input.shape(), input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto x = input.data<T>();
    auto y = out.data<T>();
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = static_cast<T>(gelu_scalar(static_cast<double>(x[i])));
    }
  });
  return out;
}

Tensor gelu_backward(const Tensor& input, const Tensor& grad_out) {
  require_same(input, grad_out, "gelu_backward");
  Tensor out(input.shape(), input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto x = input.data<T>();
    const auto g = grad_out.data<T>();
    auto y = out.data<T>();
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = static_cast<T>(static_cast<double>(g[i]) *
                            gelu_grad_scalar(static_cast<double>(x[i])));
    }
  });
  return out;
}

Tensor pixel_shuffle(const Tensor& input, int r) {
  if (r <= 0) throw ConfigError("pixel_shuffle: factor must be positive");
  const Shape& s = input.shape();
  const std::size_t rr = static_cast<std::size_t>(r);
  if (s.c % (rr * rr) != 0) {
    throw ConfigError("pixel_shuffle: " + std::to_string(s.c) +
                      " channels not divisible by " + std::to_string(rr * rr));
  }
  const Shape os{s.n, s.c / (rr * rr), s.h * rr, s.w * rr};
  Tensor out(os, input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto x = input.data<T>();
    auto y = out.data<T>();
    for (std::size_t n = 0; n < os.n; ++n)
      for (std::size_t c = 0; c < os.c; ++c)
        for (std::size_t i = 0; i < rr; ++i)
          for (std::size_t j = 0; j < rr; ++j) {
            const std::size_t src_c = c * rr * rr + i * rr + j;
            for (std::size_t h = 0; h < s.h; ++h)
              for (std::size_t w = 0; w < s.w; ++w) {
                y[out.index(n, c, h * rr + i, w * rr + j)] =
                    x[input.index(n, src_c, h, w)];
              }
          }
  });
  return out;
}

Tensor pixel_unshuffle(const Tensor& input, int r) {
  if (r <= 0) throw ConfigError("pixel_unshuffle: factor must be positive");
  const Shape& s = input.shape();
  const std::size_t rr = static_cast<std::size_t>(r);
  if (s.h % rr != 0 || s.w % rr != 0) {
    throw ConfigError("pixel_unshuffle: spatial extent " + s.str() +
                      " not divisible by " + std::to_string(rr));
  }
  const Shape os{s.n, s.c * rr * rr, s.h / rr, s.w / rr};
  Tensor out(os, input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto x = input.data<T>();
    auto y = out.data<T>();
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t i = 0; i < rr; ++i)
          for (std::size_t j = 0; j < rr; ++j) {
            const std::size_t dst_c = c * rr * rr + i * rr + j;
            for (std::size_t h = 0; h < os.h; ++h)
              for (std::size_t w = 0; w < os.w; ++w) {
                y[out.index(n, dst_c, h, w)] =
                    x[input.index(n, c, h * rr + i, w * rr + j)];
              }
          }
  });
  return out;
}

Tensor pixel_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  double eps, PixelNormCache* cache) {
  const Shape& s = input.shape();
  if (gamma.numel() != s.c || beta.numel() != s.c ||
      gamma.dtype() != input.dtype() || beta.dtype() != input.dtype()) {
    throw ConfigError("pixel_norm: gamma/beta must hold " +
                      std::to_string(s.c) + " values of the input dtype");
  }
  Tensor out(s, input.dtype());
  Tensor normalized(s, input.dtype());
  Tensor inv_std(Shape{s.n, 1, s.h, s.w}, input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto x = input.data<T>();
    const auto gm = gamma.data<T>();
    const auto bt = beta.data<T>();
    auto y = out.data<T>();
    auto xn = normalized.data<T>();
    auto is = inv_std.data<T>();
    const std::size_t plane = s.plane();
    const double inv_c = 1.0 / static_cast<double>(s.c);
    std::vector<double> mean(plane), var(plane);
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* xb = x.data() + n * s.c * plane;
      std::fill(mean.begin(), mean.end(), 0.0);
      std::fill(var.begin(), var.end(), 0.0);
      for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t p = 0; p < plane; ++p) mean[p] += xb[c * plane + p];
      for (std::size_t p = 0; p < plane; ++p) mean[p] *= inv_c;
      for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t p = 0; p < plane; ++p) {
          const double d = xb[c * plane + p] - mean[p];
          var[p] += d * d;
        }
      for (std::size_t p = 0; p < plane; ++p) {
        var[p] = 1.0 / std::sqrt(var[p] * inv_c + eps);
        is[n * plane + p] = static_cast<T>(var[p]);
      }
      for (std::size_t c = 0; c < s.c; ++c) {
        const double g = gm[c];
        const double b = bt[c];
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t i = (n * s.c + c) * plane + p;
          const double v = (xb[c * plane + p] - mean[p]) * var[p];
          xn[i] = static_cast<T>(v);
          y[i] = static_cast<T>(g * v + b);
        }
      }
    }
  });
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

PixelNormGrads pixel_norm_backward(const Tensor& grad_out,
                                   const PixelNormCache& cache,
                                   const Tensor& gamma) {
  const Shape& s = grad_out.shape();
  PixelNormGrads grads{Tensor(s, grad_out.dtype()),
                       Tensor(Shape{s.c, 1, 1, 1}, grad_out.dtype()),
                       Tensor(Shape{s.c, 1, 1, 1}, grad_out.dtype())};
  dispatch(grad_out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto go = grad_out.data<T>();
    const auto xn = cache.normalized.data<T>();
    const auto is = cache.inv_std.data<T>();
    const auto gm = gamma.data<T>();
    auto gx = grads.input.data<T>();
    auto gg = grads.gamma.data<T>();
    auto gb = grads.beta.data<T>();
    const std::size_t plane = s.plane();
    const double inv_c = 1.0 / static_cast<double>(s.c);

    for (std::size_t c = 0; c < s.c; ++c) {
      double sg = 0.0, sb = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const std::size_t base = (n * s.c + c) * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          sg += static_cast<double>(go[base + p]) * xn[base + p];
          sb += go[base + p];
        }
      }
      gg[c] = static_cast<T>(sg);
      gb[c] = static_cast<T>(sb);
    }

    // dx = inv_std * (dxh - mean(dxh) - xh * mean(dxh * xh)), dxh = dy * gamma
    std::vector<double> m1(plane), m2(plane);
    for (std::size_t n = 0; n < s.n; ++n) {
      std::fill(m1.begin(), m1.end(), 0.0);
      std::fill(m2.begin(), m2.end(), 0.0);
      for (std::size_t c = 0; c < s.c; ++c) {
        const std::size_t base = (n * s.c + c) * plane;
        const double g = gm[c];
        for (std::size_t p = 0; p < plane; ++p) {
          const double d = go[base + p] * g;
          m1[p] += d;
          m2[p] += d * xn[base + p];
        }
      }
      for (std::size_t c = 0; c < s.c; ++c) {
        const std::size_t base = (n * s.c + c) * plane;
        const double g = gm[c];
        for (std::size_t p = 0; p < plane; ++p) {
          const double d = go[base + p] * g;
          gx[base + p] = static_cast<T>(
              is[n * plane + p] *
              (d - m1[p] * inv_c - xn[base + p] * m2[p] * inv_c));
        }
      }
    }
  });
  return grads;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ConfigError("concat_channels: no inputs");
  const Shape& first = parts.front().shape();
  std::size_t channels = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w ||
        t.dtype() != parts.front().dtype()) {
      throw ConfigError("concat_channels: " + s.str() + " incompatible with " +
                        first.str());
    }
    channels += s.c;
  }
  Tensor out(Shape{first.n, channels, first.h, first.w}, parts.front().dtype());
  std::size_t offset = 0;
  for (const Tensor& t : parts) {
    accumulate_channels(out, t, offset);
    offset += t.shape().c;
  }
  return out;
}

std::vector<Tensor> split_channels(const Tensor& input,
                                   std::span<const std::size_t> sizes) {
  const Shape& s = input.shape();
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(),
                                            std::size_t{0});
  if (total != s.c) {
    throw ConfigError("split_channels: sizes sum to " + std::to_string(total) +
                      ", input has " + std::to_string(s.c) + " channels");
  }
  std::vector<Tensor> parts;
  parts.reserve(sizes.size());
  std::size_t offset = 0;
  const std::size_t plane = s.plane();
  for (std::size_t size : sizes) {
    Tensor part(Shape{s.n, size, s.h, s.w}, input.dtype());
    dispatch(input.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const auto x = input.data<T>();
      auto y = part.data<T>();
      for (std::size_t n = 0; n < s.n; ++n) {
        std::copy_n(x.data() + (n * s.c + offset) * plane, size * plane,
                    y.data() + n * size * plane);
      }
    });
    parts.push_back(std::move(part));
    offset += size;
  }
  return parts;
}

void accumulate_channels(Tensor& dst, const Tensor& src, std::size_t offset) {
  const Shape& d = dst.shape();
  const Shape& s = src.shape();
  if (s.n != d.n || s.h != d.h || s.w != d.w || offset + s.c > d.c ||
      src.dtype() != dst.dtype()) {
    throw ConfigError("accumulate_channels: " + s.str() + " does not fit " +
                      d.str() + " at channel " + std::to_string(offset));
  }
  const std::size_t plane = s.plane();
  dispatch(dst.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto y = dst.data<T>();
    const auto x = src.data<T>();
    for (std::size_t n = 0; n < s.n; ++n) {
      T* out = y.data() + (n * d.c + offset) * plane;
      const T* in = x.data() + n * s.c * plane;
      for (std::size_t i = 0; i < s.c * plane; ++i) out[i] += in[i];
    }
  });
}

double sum_all(const Tensor& t) {
  return dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    double sum = 0.0;
    for (T v : t.data<T>()) sum += v;
    return sum;
  });
}

double mean_abs_diff(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape() || pred.dtype() != target.dtype()) {
    throw UsageError("l1 loss: prediction " + pred.shape().str() +
                     " vs target " + target.shape().str());
  }
  if (pred.empty()) throw UsageError("l1 loss: empty tensors");
  return dispatch(pred.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto a = pred.data<T>();
    const auto b = target.data<T>();
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sum += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    }
    return sum / static_cast<double>(a.size());
  });
}

Tensor mean_abs_diff_backward(const Tensor& pred, const Tensor& target,
                              double upstream) {
  Tensor grad(pred.shape(), pred.dtype());
  const double g = upstream / static_cast<double>(pred.numel());
  dispatch(pred.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto a = pred.data<T>();
    const auto b = target.data<T>();
    auto out = grad.data<T>();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      out[i] = static_cast<T>(d > 0 ? g : (d < 0 ? -g : 0.0));
    }
  });
  return grad;
}

}  // namespace sdan
