#pragma once

// Forward and backward numeric kernels over NCHW tensors. All kernels are pure:
// they read their inputs and return freshly allocated outputs. Every output
// element is reduced by a single thread in a fixed order, so results are
// bit-reproducible regardless of thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "sdan/tensor.hpp"

namespace sdan {

void set_deterministic(bool enabled);
bool deterministic();

// Stride-1 convolution with zero "same" padding (cross-correlation).
struct ConvSpec {
  int kernel_h = 1;
  int kernel_w = 1;
  int dilation = 1;
  int groups = 1;
  int in_channels = 1;
  int out_channels = 1;
  bool has_bias = true;

  int extent_h() const { return kernel_h + (kernel_h - 1) * (dilation - 1); }
  int extent_w() const { return kernel_w + (kernel_w - 1) * (dilation - 1); }
  Shape weight_shape() const;
  Shape bias_shape() const;
  // Throws ConfigError on non-positive fields, indivisible groups or an even
  // effective extent.
  void validate() const;

  static ConvSpec pointwise(int in, int out, bool bias = true);
  static ConvSpec dense(int in, int out, int k, bool bias = true);
  static ConvSpec depthwise(int channels, int kh, int kw, int dilation = 1,
                            bool bias = true);
};

// weight: (out, in/groups, kh, kw); bias: out elements or nullptr.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
              const ConvSpec& spec);
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight,
                             const ConvSpec& spec, const Shape& input_shape);
Tensor conv2d_backward_weight(const Tensor& grad_out, const Tensor& input,
                              const ConvSpec& spec);
Tensor conv2d_backward_bias(const Tensor& grad_out, const ConvSpec& spec);

Tensor star_product(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// dst += src, element-wise.
void accumulate(Tensor& dst, const Tensor& src);

// Exact erf-based GELU: x * Phi(x).
Tensor gelu(const Tensor& input);
Tensor gelu_backward(const Tensor& input, const Tensor& grad_out);

// (N, C, H, W) -> (N, C/r^2, rH, rW).
Tensor pixel_shuffle(const Tensor& input, int r);
// Inverse permutation of pixel_shuffle; also its gradient.
Tensor pixel_unshuffle(const Tensor& input, int r);

inline constexpr double kPixelNormEps = 1e-6;

struct PixelNormCache {
  Tensor normalized;  // pre-affine standardized values, same shape as input
  Tensor inv_std;     // (N, 1, H, W)
};

// Per-pixel standardization across channels, then per-channel affine.
Tensor pixel_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  double eps = kPixelNormEps, PixelNormCache* cache = nullptr);

struct PixelNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};
PixelNormGrads pixel_norm_backward(const Tensor& grad_out,
                                   const PixelNormCache& cache,
                                   const Tensor& gamma);

Tensor concat_channels(std::span<const Tensor> parts);
std::vector<Tensor> split_channels(const Tensor& input,
                                   std::span<const std::size_t> sizes);
// dst[:, offset:offset+src.C] += src
void accumulate_channels(Tensor& dst, const Tensor& src, std::size_t offset);

double sum_all(const Tensor& t);
double mean_abs_diff(const Tensor& pred, const Tensor& target);
// d/dpred of mean|pred - target|, scaled by upstream; sign(0) is taken as 0.
Tensor mean_abs_diff_backward(const Tensor& pred, const Tensor& target,
                              double upstream);

}  // namespace sdan
