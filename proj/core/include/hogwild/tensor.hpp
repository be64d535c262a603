#pragma once

#include <memory>
#include <vector>

#include "hogwild/errors.hpp"

namespace hogwild {

class Tape;

// Dense row-major matrix of doubles. Values are immutable: no operation
// mutates its inputs, results always own fresh storage. A tensor may carry a
// (tape, node) reference when it was produced on a tape; copying the handle
// shares the payload.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::shared_ptr<const std::vector<double>> data;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;

  static Tensor zeros(int r, int c) { return full(r, c, 0.0); }
  static Tensor ones(int r, int c) { return full(r, c, 1.0); }
  static Tensor full(int r, int c, double v);
  // Column vector (n x 1).
  static Tensor from_vector(const std::vector<double>& v);
  // Row vector (1 x n).
  static Tensor from_row(const std::vector<double>& v);
  static Tensor from_data(int r, int c, std::vector<double> row_major);

  int size() const { return rows * cols; }
  bool empty() const { return size() == 0; }
  bool tracked() const { return tape != nullptr; }

  double at(int r, int c) const { return (*data)[static_cast<size_t>(r) * cols + c]; }
  double at(int i) const { return (*data)[static_cast<size_t>(i)]; }
  double scalar() const;
  const std::vector<double>& values() const { return *data; }

  // Same payload, no tape reference.
  Tensor detached() const;

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const;
};

// Throws NumericError naming `op` if any entry is not finite.
void check_finite(const char* op, const Tensor& t);

}  // namespace hogwild
