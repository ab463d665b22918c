#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nlgd/rng.hpp"

namespace nlgd {

// Dense row-major tensor of doubles. This is the universal value carrier:
// vectors, matrices and parameter blocks are all Tensors. Instances are
// plain values; copying is cheap enough at the scales used here.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> extents, double fill = 0.0);
  Tensor(std::vector<std::size_t> extents, std::vector<double> values);

  static Tensor vector(std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  // 2-D accessors; valid only for rank-2 tensors.
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }
  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_string() const;
};

// Throws std::invalid_argument naming both shapes when inner extents differ.
Tensor matmul(const Tensor& a, const Tensor& b);

// I.i.d. normal samples; std == 0 yields exactly `mean` everywhere.
Tensor sample_gaussian(std::vector<std::size_t> shape, double mean, double std,
                       RngStream& rng);

template <typename F>
Tensor elementwise(const Tensor& a, F&& f) {
  Tensor out = a;
  for (double& x : out.data) x = f(x);
  return out;
}

Tensor zeros_like(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
double dot(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& a);

// y += c * x, shapes must match.
void axpy(double c, const Tensor& x, Tensor& y);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace nlgd
