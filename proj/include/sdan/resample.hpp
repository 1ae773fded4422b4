#pragma once

#include "sdan/image.hpp"

namespace sdan {

// Catmull-Rom cubic (a = -0.5) weight for a tap at signed distance t.
double cubic_weight(double t);

// Separable bicubic resampling with center-aligned coordinates
// src = (dst + 0.5) * in/out - 0.5, edge-clamped taps, no antialiasing.
// Output is clamped to [0, 255] and rounded half away from zero.
ImageRGB bicubic_resize(const ImageRGB& img, int out_w, int out_h);

}  // namespace sdan
