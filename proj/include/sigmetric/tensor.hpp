#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "sigmetric/errors.hpp"

namespace sigmetric {

// Dense n-dimensional tensor.  Shapes in use: [B,C,T] convolutional
// activations, [B,D] features, [C] / [Cout,Cin,K] / [Din,Dout] parameters.
template <class Real>
struct Tensor {
  std::vector<int> shape;
  std::vector<Real> values;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    values.assign(numel_of(shape), Real(0));
  }
  Tensor(std::vector<int> s, std::vector<Real> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != numel_of(shape))
      throw DimensionError("tensor: value count does not match shape");
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d < 0) throw DimensionError("tensor: negative dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t numel() const { return values.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  void fill(Real v) { std::fill(values.begin(), values.end(), v); }

  std::string shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

  template <class Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.shape = shape;
    out.values.reserve(values.size());
    for (Real v : values) out.values.push_back(static_cast<Other>(v));
    return out;
  }
};

template <class Real>
bool same_shape(const Tensor<Real>& a, const Tensor<Real>& b) {
  return a.shape == b.shape;
}

}  // namespace sigmetric
