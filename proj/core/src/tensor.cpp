#include "hogwild/tensor.hpp"

#include <cmath>
#include <string>

namespace hogwild {

Tensor Tensor::full(int r, int c, double v) {
  if (r < 0 || c < 0) throw ShapeError("Tensor::full: negative dimension");
  Tensor t;
  t.rows = r;
  t.cols = c;
  t.data = std::make_shared<const std::vector<double>>(static_cast<size_t>(r) * c, v);
  return t;
}

Tensor Tensor::from_vector(const std::vector<double>& v) {
  return from_data(static_cast<int>(v.size()), 1, v);
}

Tensor Tensor::from_row(const std::vector<double>& v) {
  return from_data(1, static_cast<int>(v.size()), v);
}

Tensor Tensor::from_data(int r, int c, std::vector<double> row_major) {
  if (r < 0 || c < 0) throw ShapeError("Tensor::from_data: negative dimension");
  if (row_major.size() != static_cast<size_t>(r) * c)
    throw ShapeError("Tensor::from_data: data length " + std::to_string(row_major.size()) +
                     " does not match shape " + std::to_string(r) + "x" + std::to_string(c));
  Tensor t;
  t.rows = r;
  t.cols = c;
  t.data = std::make_shared<const std::vector<double>>(std::move(row_major));
  check_finite("from_data", t);
  return t;
}

double Tensor::scalar() const {
  if (size() != 1) throw ShapeError("Tensor::scalar: tensor is " + shape_str() + ", expected 1x1");
  return (*data)[0];
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape = nullptr;
  t.node = -1;
  return t;
}

std::string Tensor::shape_str() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

void check_finite(const char* op, const Tensor& t) {
  for (double v : *t.data) {
    if (!std::isfinite(v))
      throw NumericError(std::string(op) + ": non-finite value in " + t.shape_str() + " result");
  }
}

}  // namespace hogwild
