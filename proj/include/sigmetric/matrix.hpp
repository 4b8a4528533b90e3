#pragma once

#include <cstddef>
#include <vector>

#include "sigmetric/errors.hpp"

namespace sigmetric {

// Dense row-major matrix of doubles.  Used for embedding batches handed to
// miners and metrics; training tensors live in tensor.hpp.
struct RowMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  RowMatrix() = default;
  RowMatrix(int r, int c) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, 0.0) {
    if (r < 0 || c < 0) throw DimensionError("RowMatrix: negative shape");
  }

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
  const double* row(int r) const { return values.data() + static_cast<std::size_t>(r) * cols; }
  double* row(int r) { return values.data() + static_cast<std::size_t>(r) * cols; }
};

inline double squared_row_distance(const RowMatrix& m, int i, int j) {
  double s = 0.0;
  const double* a = m.row(i);
  const double* b = m.row(j);
  for (int c = 0; c < m.cols; ++c) {
    const double d = a[c] - b[c];
    s += d * d;
  }
  return s;
}

}  // namespace sigmetric
