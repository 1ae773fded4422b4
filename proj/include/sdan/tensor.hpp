#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace sdan {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

const char* dtype_name(DType dtype);

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

// Calls f(float{}) or f(double{}) depending on the runtime tag.
template <typename F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::f32) return f(float{});
  return f(double{});
}

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense NCHW array. Value semantics: copying a Tensor copies its buffer.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, DType dtype);

  static Tensor zeros(Shape shape, DType dtype = DType::f32);
  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor from_values(Shape shape, std::span<const double> values,
                            DType dtype = DType::f32);
  static Tensor scalar(double value, DType dtype = DType::f32);

  const Shape& shape() const { return shape_; }
  DType dtype() const { return dtype_; }
  std::size_t numel() const { return shape_.numel(); }
  bool empty() const { return numel() == 0; }

  template <typename T>
  std::span<T> data() {
    return std::span<T>(std::get<std::vector<T>>(storage_));
  }
  template <typename T>
  std::span<const T> data() const {
    return std::span<const T>(std::get<std::vector<T>>(storage_));
  }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h,
                    std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  // Element access through double; convenient in tests and small loops only.
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;
  void set(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
           double value);
  double flat(std::size_t i) const;
  void set_flat(std::size_t i, double value);

  std::vector<double> to_vector() const;
  Tensor to(DType dtype) const;
  // Same values under a new shape of equal element count.
  Tensor reshaped(Shape shape) const;
  void fill(double value);
  bool all_finite() const;

  // Bitwise equality of shape, dtype and every stored value.
  bool identical(const Tensor& other) const;

 private:
  Shape shape_;
  DType dtype_ = DType::f32;
  std::variant<std::vector<float>, std::vector<double>> storage_;
};

// Largest absolute element-wise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace sdan
