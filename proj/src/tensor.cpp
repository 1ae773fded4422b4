#include "sdan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "sdan/errors.hpp"

namespace sdan {

const char* dtype_name(DType dtype) {
  return dtype == DType::f32 ? "f32" : "f64";
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, DType dtype) : shape_(shape), dtype_(dtype) {
  if (dtype == DType::f32) {
    storage_ = std::vector<float>(shape.numel(), 0.0f);
  } else {
    storage_ = std::vector<double>(shape.numel(), 0.0);
  }
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return Tensor(shape, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t(shape, dtype);
  t.fill(value);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values,
                           DType dtype) {
  if (values.size() != shape.numel()) {
    throw ConfigError("from_values: " + std::to_string(values.size()) +
                      " values for shape " + shape.str());
  }
  Tensor t(shape, dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto out = t.data<T>();
    for (std::size_t i = 0; i < values.size(); ++i) {
      out[i] = static_cast<T>(values[i]);
    }
  });
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) {
  return full(Shape{1, 1, 1, 1}, value, dtype);
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t h,
                  std::size_t w) const {
  return flat(index(n, c, h, w));
}

void Tensor::set(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                 double value) {
  set_flat(index(n, c, h, w), value);
}

double Tensor::flat(std::size_t i) const {
  return dispatch(dtype_, [&](auto tag) -> double {
    using T = decltype(tag);
    return static_cast<double>(data<T>()[i]);
  });
}

void Tensor::set_flat(std::size_t i, double value) {
  dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    data<T>()[i] = static_cast<T>(value);
  });
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(numel());
  dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    auto src = data<T>();
    std::copy(src.begin(), src.end(), out.begin());
  });
  return out;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != numel()) {
    throw UsageError("reshaped: " + shape_.str() + " cannot become " + shape.str());
  }
  Tensor out = *this;
  out.shape_ = shape;
  return out;
}

Tensor Tensor::to(DType dtype) const {
  if (dtype == dtype_) return *this;
  Tensor out(shape_, dtype);
  dispatch(dtype_, [&](auto src_tag) {
    using S = decltype(src_tag);
    dispatch(dtype, [&](auto dst_tag) {
      using D = decltype(dst_tag);
      auto src = data<S>();
      auto dst = out.data<D>();
      for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = static_cast<D>(src[i]);
      }
    });
  });
  return out;
}

void Tensor::fill(double value) {
  dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    auto d = data<T>();
    std::fill(d.begin(), d.end(), static_cast<T>(value));
  });
}

bool Tensor::all_finite() const {
  return dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    auto d = data<T>();
    return std::all_of(d.begin(), d.end(),
                       [](T v) { return std::isfinite(v); });
  });
}

bool Tensor::identical(const Tensor& other) const {
  if (shape_ != other.shape_ || dtype_ != other.dtype_) return false;
  return dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    auto a = data<T>();
    auto b = other.data<T>();
    return a.empty() || std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
  });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError("max_abs_diff: shape mismatch " + a.shape().str() +
                      " vs " + b.shape().str());
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(a.flat(i) - b.flat(i)));
  }
  return worst;
}

}  // namespace sdan
