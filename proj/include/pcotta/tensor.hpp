#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "pcotta/common.hpp"

namespace pcotta {

/// Dense row-major tensor over scalar T (float in the engine, double in the
/// gradient checker). Shapes are arbitrary rank; most operations treat the
/// last dimension as channels and the leading dimensions as rows.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(size_t(count(shape)), fill);
  }
  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (int64_t(data.size()) != count(shape))
      throw shape_error("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
  }

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  static std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
  }

  int64_t size() const { return int64_t(data.size()); }

  /// Rows = product of all but the last dimension (1 for rank-0/1 scalars).
  int rows() const {
    if (shape.empty()) return 1;
    int64_t r = 1;
    for (size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
    return int(r);
  }
  /// Columns = last dimension.
  int cols() const { return shape.empty() ? 1 : shape.back(); }

  T& at(int r, int c) { return data[size_t(r) * cols() + c]; }
  T at(int r, int c) const { return data[size_t(r) * cols() + c]; }
  T& operator[](int64_t i) { return data[size_t(i)]; }
  T operator[](int64_t i) const { return data[size_t(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, T v) { return Tensor(std::move(s), v); }
  static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }
  static Tensor identity(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t.at(i, i) = T(1);
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace pcotta
