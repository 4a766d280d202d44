#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "absa/errors.hpp"
#include "absa/rng.hpp"

namespace absa {

// Dense row-major float64 array, rank 1 or 2 in practice.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != count(shape))
      throw StructuralError("tensor data length does not match shape");
  }

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    auto n = count(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  static Tensor full(std::vector<int> s, double v) {
    auto n = count(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor vec(std::initializer_list<double> vals) {
    return Tensor({static_cast<int>(vals.size())},
                  std::vector<double>(vals));
  }

  static Tensor uniform(std::vector<int> s, double radius, Rng& rng) {
    Tensor t = zeros(std::move(s));
    for (auto& x : t.data) x = rng.next_symmetric(radius);
    return t;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  int rows() const {
    if (rank() != 2) throw StructuralError("rows() on non-matrix");
    return shape[0];
  }
  int cols() const {
    if (rank() != 2) throw StructuralError("cols() on non-matrix");
    return shape[1];
  }

  double& operator()(int i) { return data[static_cast<size_t>(i)]; }
  double operator()(int i) const { return data[static_cast<size_t>(i)]; }
  double& operator()(int i, int j) {
    return data[static_cast<size_t>(i) * shape[1] + j];
  }
  double operator()(int i, int j) const {
    return data[static_cast<size_t>(i) * shape[1] + j];
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i)
      os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
  }
};

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (int64_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

}  // namespace absa
