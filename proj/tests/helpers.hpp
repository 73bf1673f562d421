#pragma once

#include <vector>

#include "pcotta/rng.hpp"
#include "pcotta/tensor.hpp"

namespace testutil {

template <typename T>
pcotta::Tensor<T> random_tensor(std::vector<int> shape, pcotta::Rng& rng, double scale = 1.0) {
  pcotta::Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = T(rng.uniform(-scale, scale));
  return t;
}

/// Independent triple-loop matrix product, accumulated in double.
template <typename T>
pcotta::Tensor<T> matmul_oracle(const pcotta::Tensor<T>& a, const pcotta::Tensor<T>& b) {
  int m = a.rows(), k = a.cols(), n = b.cols();
  pcotta::Tensor<T> out({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0;
      for (int kk = 0; kk < k; ++kk) acc += double(a.at(i, kk)) * double(b.at(kk, j));
      out.at(i, j) = T(acc);
    }
  return out;
}

template <typename T>
double max_abs_diff(const pcotta::Tensor<T>& a, const pcotta::Tensor<T>& b) {
  double m = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(double(a.data[i]) - double(b.data[i])));
  return m;
}

}  // namespace testutil
