#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dsda {

/// Dense NHWC tensor of doubles.
struct Tensor4 {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;
  std::vector<double> values;

  Tensor4() = default;
  Tensor4(std::size_t n_, std::size_t h_, std::size_t w_, std::size_t c_, double fill = 0.0)
      : n(n_), h(h_), w(w_), c(c_), values(n_ * h_ * w_ * c_, fill) {}

  std::size_t index(std::size_t b, std::size_t i, std::size_t j, std::size_t ch) const {
    return ((b * h + i) * w + j) * c + ch;
  }
  double& operator()(std::size_t b, std::size_t i, std::size_t j, std::size_t ch) {
    return values[index(b, i, j, ch)];
  }
  double operator()(std::size_t b, std::size_t i, std::size_t j, std::size_t ch) const {
    return values[index(b, i, j, ch)];
  }

  std::size_t sample_size() const { return h * w * c; }
  std::span<double> sample(std::size_t b) { return {values.data() + b * sample_size(), sample_size()}; }
  std::span<const double> sample(std::size_t b) const {
    return {values.data() + b * sample_size(), sample_size()};
  }

  bool same_shape(const Tensor4& o) const { return n == o.n && h == o.h && w == o.w && c == o.c; }
};

/// Row-major batch of vectors (rows = samples).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

}  // namespace dsda
