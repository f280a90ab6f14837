#pragma once

// Dense multi-dimensional array storage shared by the whole library.
//
// Layout convention (used everywhere, never transposed): channels-major,
// depth-height-width minor. A volume is [C, D, H, W] row-major, a conv
// weight is [Cout, Cin, k, k, k]. Scalars are rank-0 tensors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikewarp {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Raised whenever an operation produces or receives NaN/Inf values.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0))
      : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), fill) {}
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
      throw std::invalid_argument("value count does not match shape " + shape_str(shape));
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  bool is_scalar() const { return shape.empty(); }
  T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void require_finite(const char* where) const {
    if (!all_finite()) throw NonFiniteError(std::string("non-finite values in ") + where);
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data[static_cast<std::size_t>(i)]);
    return out;
  }

  T sum() const {
    double acc = 0;
    for (T v : data) acc += static_cast<double>(v);
    return static_cast<T>(acc);
  }
};

// 4-d indexing helper for [C,D,H,W] tensors.
struct Dims4 {
  std::int64_t c, d, h, w;
  static Dims4 of(const Shape& s) {
    if (s.size() != 4) throw std::invalid_argument("expected rank-4 tensor, got " + shape_str(s));
    return {s[0], s[1], s[2], s[3]};
  }
  std::int64_t spatial() const { return d * h * w; }
  std::int64_t numel() const { return c * spatial(); }
  std::int64_t idx(std::int64_t ci, std::int64_t z, std::int64_t y, std::int64_t x) const {
    return ((ci * d + z) * h + y) * w + x;
  }
};

template <class T>
Tensor<T> random_normal(const Shape& s, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> out(s);
  for (auto& v : out.data) v = static_cast<T>(dist(rng));
  return out;
}

template <class T>
Tensor<T> random_uniform(const Shape& s, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> out(s);
  for (auto& v : out.data) v = static_cast<T>(dist(rng));
  return out;
}

}  // namespace spikewarp
