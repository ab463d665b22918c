#include "nlgd/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace nlgd {

namespace {

std::size_t extent_product(const std::vector<std::size_t>& extents) {
  std::size_t n = 1;
  for (std::size_t e : extents) {
    if (e == 0) throw std::invalid_argument("tensor extents must be positive");
    n *= e;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> extents, double fill)
    : shape(std::move(extents)), data(extent_product(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> extents, std::vector<double> values)
    : shape(std::move(extents)), data(std::move(values)) {
  if (data.size() != extent_product(shape)) {
    throw std::invalid_argument("tensor data length does not match shape " +
                                shape_string());
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                a.shape_string() + " vs " + b.shape_string());
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: incompatible shapes " +
                                a.shape_string() + " and " + b.shape_string());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        out.at(i, j) += aip * b.at(p, j);
      }
    }
  }
  return out;
}

Tensor sample_gaussian(std::vector<std::size_t> shape, double mean, double std,
                       RngStream& rng) {
  if (std < 0.0) throw std::invalid_argument("sample_gaussian: std must be >= 0");
  Tensor out(std::move(shape));
  for (double& x : out.data) x = mean + std * rng.next_gaussian();
  return out;
}

Tensor zeros_like(const Tensor& a) { return Tensor(a.shape); }

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (double& x : out.data) x *= c;
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double x : a.data) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  }
  return m;
}

bool all_finite(const Tensor& a) {
  for (double x : a.data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void axpy(double c, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] += c * x.data[i];
}

}  // namespace nlgd
