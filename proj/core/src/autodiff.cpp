#include "hogwild/autodiff.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace hogwild {

namespace {

Tensor make_value(int r, int c, std::vector<double> data) {
  Tensor t;
  t.rows = r;
  t.cols = c;
  t.data = std::make_shared<const std::vector<double>>(std::move(data));
  return t;
}

void require_same_tape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.tracked() && b.tracked() && a.tape != b.tape)
    throw UsageError(std::string(op) + ": operands recorded on different tapes");
}

Tape* tape_of(const Tensor& a, const Tensor& b) {
  return a.tracked() ? a.tape : (b.tracked() ? b.tape : nullptr);
}

Tensor finish_unary(Op op, const char* name, const Tensor& a, Tensor out, double s0 = 0.0,
                    double s1 = 0.0) {
  check_finite(name, out);
  if (!a.tracked()) return out;
  TapeNode n;
  n.op = op;
  n.pa = a.node;
  n.s0 = s0;
  n.s1 = s1;
  return a.tape->record_result(std::move(n), std::move(out));
}

Tensor finish_binary(Op op, const char* name, const Tensor& a, const Tensor& b, Tensor out,
                     double s0 = 0.0, double s1 = 0.0) {
  check_finite(name, out);
  require_same_tape(name, a, b);
  Tape* tape = tape_of(a, b);
  if (tape == nullptr) return out;
  TapeNode n;
  n.op = op;
  n.pa = a.tracked() ? a.node : -1;
  n.pb = b.tracked() ? b.node : -1;
  if (!a.tracked()) n.ca = a;
  if (!b.tracked()) n.cb = b;
  n.s0 = s0;
  n.s1 = s1;
  return tape->record_result(std::move(n), std::move(out));
}

enum class Broadcast { Same, AScalar, BScalar };

Broadcast classify(const char* op, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Broadcast::Same;
  if (a.size() == 1) return Broadcast::AScalar;
  if (b.size() == 1) return Broadcast::BScalar;
  throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

template <typename F>
Tensor ew_binary_value(const char* op, const Tensor& a, const Tensor& b, F f) {
  const Broadcast bc = classify(op, a, b);
  const Tensor& shape = (bc == Broadcast::AScalar) ? b : a;
  std::vector<double> out(static_cast<size_t>(shape.size()));
  const auto& av = *a.data;
  const auto& bv = *b.data;
  switch (bc) {
    case Broadcast::Same:
      for (size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
      break;
    case Broadcast::AScalar:
      for (size_t i = 0; i < out.size(); ++i) out[i] = f(av[0], bv[i]);
      break;
    case Broadcast::BScalar:
      for (size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[0]);
      break;
  }
  return make_value(shape.rows, shape.cols, std::move(out));
}

template <typename F>
Tensor ew_unary_value(const Tensor& a, F f) {
  std::vector<double> out(static_cast<size_t>(a.size()));
  const auto& av = *a.data;
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return make_value(a.rows, a.cols, std::move(out));
}

double softplus_scalar(double x) {
  // max(x,0) + log1p(exp(-|x|)) is exact and never overflows.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor Tape::record_result(TapeNode node, Tensor value) {
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size()) - 1;
  value.tape = this;
  value.node = id;
  nodes_[static_cast<size_t>(id)].out = value;
  return value;
}

Tensor Tape::track(const Tensor& value) {
  if (value.data == nullptr) throw UsageError("Tape::track: tensor has no data");
  TapeNode n;
  n.op = Op::Leaf;
  return record_result(std::move(n), value.detached());
}

Tensor add(const Tensor& a, const Tensor& b) {
  return finish_binary(Op::Add, "add", a, b,
                       ew_binary_value("add", a, b, [](double x, double y) { return x + y; }));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return finish_binary(Op::Sub, "sub", a, b,
                       ew_binary_value("sub", a, b, [](double x, double y) { return x - y; }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return finish_binary(Op::Mul, "mul", a, b,
                       ew_binary_value("mul", a, b, [](double x, double y) { return x * y; }));
}

Tensor div(const Tensor& a, const Tensor& b) {
  return finish_binary(Op::Div, "div", a, b,
                       ew_binary_value("div", a, b, [](double x, double y) { return x / y; }));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols != b.rows)
    throw ShapeError("matmul: inner dimensions disagree, " + a.shape_str() + " vs " +
                     b.shape_str());
  std::vector<double> out(static_cast<size_t>(a.rows) * b.cols, 0.0);
  const auto& av = *a.data;
  const auto& bv = *b.data;
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double aik = av[static_cast<size_t>(i) * a.cols + k];
      if (aik == 0.0) continue;
      const size_t brow = static_cast<size_t>(k) * b.cols;
      const size_t orow = static_cast<size_t>(i) * b.cols;
      for (int j = 0; j < b.cols; ++j) out[orow + j] += aik * bv[brow + j];
    }
  }
  return finish_binary(Op::MatMul, "matmul", a, b, make_value(a.rows, b.cols, std::move(out)));
}

Tensor transpose(const Tensor& a) {
  std::vector<double> out(static_cast<size_t>(a.size()));
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j)
      out[static_cast<size_t>(j) * a.rows + i] = a.at(i, j);
  return finish_unary(Op::Transpose, "transpose", a, make_value(a.cols, a.rows, std::move(out)));
}

Tensor relu(const Tensor& a) {
  return finish_unary(Op::Relu, "relu", a,
                      ew_unary_value(a, [](double x) { return x > 0.0 ? x : 0.0; }));
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return finish_unary(Op::LeakyRelu, "leaky_relu", a,
                      ew_unary_value(a, [slope](double x) { return x > 0.0 ? x : slope * x; }),
                      slope);
}

Tensor softplus(const Tensor& a) {
  return finish_unary(Op::Softplus, "softplus", a, ew_unary_value(a, softplus_scalar));
}

Tensor sigmoid(const Tensor& a) {
  return finish_unary(Op::Sigmoid, "sigmoid", a, ew_unary_value(a, sigmoid_scalar));
}

Tensor tanh_t(const Tensor& a) {
  return finish_unary(Op::Tanh, "tanh", a, ew_unary_value(a, [](double x) { return std::tanh(x); }));
}

Tensor exp_t(const Tensor& a) {
  return finish_unary(Op::Exp, "exp", a, ew_unary_value(a, [](double x) { return std::exp(x); }));
}

Tensor log_t(const Tensor& a) {
  return finish_unary(Op::Log, "log", a, ew_unary_value(a, [](double x) { return std::log(x); }));
}

Tensor square(const Tensor& a) {
  return finish_unary(Op::Square, "square", a, ew_unary_value(a, [](double x) { return x * x; }));
}

Tensor sqrt_t(const Tensor& a) {
  return finish_unary(Op::Sqrt, "sqrt", a, ew_unary_value(a, [](double x) { return std::sqrt(x); }));
}

Tensor neg(const Tensor& a) {
  return finish_unary(Op::Neg, "neg", a, ew_unary_value(a, [](double x) { return -x; }));
}

Tensor scalar_mul(const Tensor& a, double s) {
  return finish_unary(Op::ScalarMul, "scalar_mul", a,
                      ew_unary_value(a, [s](double x) { return s * x; }), s);
}

Tensor scalar_add(const Tensor& a, double s) {
  return finish_unary(Op::ScalarAdd, "scalar_add", a,
                      ew_unary_value(a, [s](double x) { return s + x; }), s);
}

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double v : *a.data) acc += v;
  return finish_unary(Op::SumAll, "sum_all", a, make_value(1, 1, {acc}));
}

Tensor col_sums(const Tensor& a) {
  std::vector<double> out(static_cast<size_t>(a.cols), 0.0);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out[static_cast<size_t>(j)] += a.at(i, j);
  return finish_unary(Op::ColSums, "col_sums", a, make_value(1, a.cols, std::move(out)));
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (v.rows != 1 || v.cols != a.cols)
    throw ShapeError("add_rowvec: vector " + v.shape_str() + " does not match matrix " +
                     a.shape_str());
  std::vector<double> out(static_cast<size_t>(a.size()));
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j)
      out[static_cast<size_t>(i) * a.cols + j] = a.at(i, j) + v.at(0, j);
  return finish_binary(Op::AddRowVec, "add_rowvec", a, v, make_value(a.rows, a.cols, std::move(out)));
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.cols != b.cols)
    throw ShapeError("concat_rows: column counts disagree, " + a.shape_str() + " vs " +
                     b.shape_str());
  std::vector<double> out;
  out.reserve(static_cast<size_t>(a.size()) + b.size());
  out.insert(out.end(), a.data->begin(), a.data->end());
  out.insert(out.end(), b.data->begin(), b.data->end());
  return finish_binary(Op::ConcatRows, "concat_rows", a, b,
                       make_value(a.rows + b.rows, a.cols, std::move(out)), a.rows);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows != b.rows)
    throw ShapeError("concat_cols: row counts disagree, " + a.shape_str() + " vs " +
                     b.shape_str());
  const int cols = a.cols + b.cols;
  std::vector<double> out(static_cast<size_t>(a.rows) * cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < a.cols; ++j) out[static_cast<size_t>(i) * cols + j] = a.at(i, j);
    for (int j = 0; j < b.cols; ++j) out[static_cast<size_t>(i) * cols + a.cols + j] = b.at(i, j);
  }
  return finish_binary(Op::ConcatCols, "concat_cols", a, b,
                       make_value(a.rows, cols, std::move(out)), a.cols);
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  if (r0 < 0 || r1 < r0 || r1 > a.rows)
    throw ShapeError("slice_rows: range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                     ") invalid for " + a.shape_str());
  std::vector<double> out(a.data->begin() + static_cast<size_t>(r0) * a.cols,
                          a.data->begin() + static_cast<size_t>(r1) * a.cols);
  return finish_unary(Op::SliceRows, "slice_rows", a, make_value(r1 - r0, a.cols, std::move(out)),
                      r0, r1);
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  if (c0 < 0 || c1 < c0 || c1 > a.cols)
    throw ShapeError("slice_cols: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                     ") invalid for " + a.shape_str());
  std::vector<double> out(static_cast<size_t>(a.rows) * (c1 - c0));
  for (int i = 0; i < a.rows; ++i)
    for (int j = c0; j < c1; ++j)
      out[static_cast<size_t>(i) * (c1 - c0) + (j - c0)] = a.at(i, j);
  return finish_unary(Op::SliceCols, "slice_cols", a, make_value(a.rows, c1 - c0, std::move(out)),
                      c0, c1);
}

Tensor detach(const Tensor& a) { return a.detached(); }

namespace {

// 0/1 (or slope) mask of the sign pattern; constant w.r.t. differentiation, so
// second derivatives of kinked activations are zero almost everywhere.
Tensor kink_mask(const Tensor& a, double pos, double nonpos) {
  std::vector<double> out(static_cast<size_t>(a.size()));
  const auto& av = *a.data;
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? pos : nonpos;
  return make_value(a.rows, a.cols, std::move(out));
}

}  // namespace

Gradients Tape::backward(const Tensor& y, bool create_graph, int frontier) {
  if (!y.tracked() || y.tape != this)
    throw UsageError("backward: output is not recorded on this tape");
  if (y.size() != 1) throw UsageError("backward: output must be scalar, got " + y.shape_str());
  const int root = y.node;
  if (frontier < 0 || frontier > root)
    throw UsageError("backward: frontier out of range");

  std::vector<char> ancestor(static_cast<size_t>(root) + 1, 0);
  {
    std::vector<int> stack{root};
    ancestor[static_cast<size_t>(root)] = 1;
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      if (id < frontier) continue;  // leaf cut: inputs stay unexplored
      const TapeNode& n = nodes_[static_cast<size_t>(id)];
      for (int p : {n.pa, n.pb}) {
        if (p >= 0 && !ancestor[static_cast<size_t>(p)]) {
          ancestor[static_cast<size_t>(p)] = 1;
          stack.push_back(p);
        }
      }
    }
  }

  std::vector<Tensor> adj(static_cast<size_t>(root) + 1);
  adj[static_cast<size_t>(root)] = Tensor::ones(1, 1);

  auto accumulate = [&adj](int id, const Tensor& g) {
    if (id < 0) return;
    Tensor& slot = adj[static_cast<size_t>(id)];
    slot = (slot.data == nullptr) ? g : add(slot, g);
  };

  for (int id = root; id >= frontier; --id) {
    if (!ancestor[static_cast<size_t>(id)] || adj[static_cast<size_t>(id)].data == nullptr)
      continue;
    // Copy: with create_graph the vector may reallocate while rules append.
    const TapeNode nd = nodes_[static_cast<size_t>(id)];
    if (nd.op == Op::Leaf) continue;

    const Tensor gy = adj[static_cast<size_t>(id)];
    auto input = [&](int pid, const Tensor& c) -> Tensor {
      if (pid < 0) return c;
      const Tensor& h = nodes_[static_cast<size_t>(pid)].out;
      return create_graph ? h : h.detached();
    };
    const Tensor out_h = create_graph ? nd.out : nd.out.detached();

    switch (nd.op) {
      case Op::Leaf:
        break;
      case Op::Add: {
        const Tensor a = input(nd.pa, nd.ca);
        const Tensor b = input(nd.pb, nd.cb);
        if (nd.pa >= 0) accumulate(nd.pa, a.size() == 1 && gy.size() != 1 ? sum_all(gy) : gy);
        if (nd.pb >= 0) accumulate(nd.pb, b.size() == 1 && gy.size() != 1 ? sum_all(gy) : gy);
        break;
      }
      case Op::Sub: {
        const Tensor a = input(nd.pa, nd.ca);
        const Tensor b = input(nd.pb, nd.cb);
        if (nd.pa >= 0) accumulate(nd.pa, a.size() == 1 && gy.size() != 1 ? sum_all(gy) : gy);
        if (nd.pb >= 0) {
          Tensor gb = neg(gy);
          accumulate(nd.pb, b.size() == 1 && gy.size() != 1 ? sum_all(gb) : gb);
        }
        break;
      }
      case Op::Mul: {
        const Tensor a = input(nd.pa, nd.ca);
        const Tensor b = input(nd.pb, nd.cb);
        if (nd.pa >= 0) {
          Tensor ga = mul(gy, b);
          accumulate(nd.pa, a.size() == 1 && ga.size() != 1 ? sum_all(ga) : ga);
        }
        if (nd.pb >= 0) {
          Tensor gb = mul(gy, a);
          accumulate(nd.pb, b.size() == 1 && gb.size() != 1 ? sum_all(gb) : gb);
        }
        break;
      }
      case Op::Div: {
        const Tensor a = input(nd.pa, nd.ca);
        const Tensor b = input(nd.pb, nd.cb);
        if (nd.pa >= 0) {
          Tensor ga = div(gy, b);
          accumulate(nd.pa, a.size() == 1 && ga.size() != 1 ? sum_all(ga) : ga);
        }
        if (nd.pb >= 0) {
          Tensor gb = neg(mul(gy, div(out_h, b)));
          accumulate(nd.pb, b.size() == 1 && gb.size() != 1 ? sum_all(gb) : gb);
        }
        break;
      }
      case Op::MatMul: {
        const Tensor a = input(nd.pa, nd.ca);
        const Tensor b = input(nd.pb, nd.cb);
        if (nd.pa >= 0) accumulate(nd.pa, matmul(gy, transpose(b)));
        if (nd.pb >= 0) accumulate(nd.pb, matmul(transpose(a), gy));
        break;
      }
      case Op::Transpose:
        accumulate(nd.pa, transpose(gy));
        break;
      case Op::Relu: {
        const Tensor a = input(nd.pa, nd.ca);
        accumulate(nd.pa, mul(gy, kink_mask(a.detached(), 1.0, 0.0)));
        break;
      }
      case Op::LeakyRelu: {
        const Tensor a = input(nd.pa, nd.ca);
        accumulate(nd.pa, mul(gy, kink_mask(a.detached(), 1.0, nd.s0)));
        break;
      }
      case Op::Softplus: {
        const Tensor a = input(nd.pa, nd.ca);
        accumulate(nd.pa, mul(gy, sigmoid(a)));
        break;
      }
      case Op::Sigmoid:
        accumulate(nd.pa, mul(gy, mul(out_h, scalar_add(neg(out_h), 1.0))));
        break;
      case Op::Tanh:
        accumulate(nd.pa, mul(gy, scalar_add(neg(square(out_h)), 1.0)));
        break;
      case Op::Exp:
        accumulate(nd.pa, mul(gy, out_h));
        break;
      case Op::Log: {
        const Tensor a = input(nd.pa, nd.ca);
        accumulate(nd.pa, div(gy, a));
        break;
      }
      case Op::Square: {
        const Tensor a = input(nd.pa, nd.ca);
        accumulate(nd.pa, mul(gy, scalar_mul(a, 2.0)));
        break;
      }
      case Op::Sqrt:
        accumulate(nd.pa, div(gy, scalar_mul(out_h, 2.0)));
        break;
      case Op::Neg:
        accumulate(nd.pa, neg(gy));
        break;
      case Op::ScalarMul:
        accumulate(nd.pa, scalar_mul(gy, nd.s0));
        break;
      case Op::ScalarAdd:
        accumulate(nd.pa, gy);
        break;
      case Op::SumAll: {
        const Tensor a = input(nd.pa, nd.ca);
        accumulate(nd.pa, mul(Tensor::ones(a.rows, a.cols), gy));
        break;
      }
      case Op::ColSums: {
        const Tensor a = input(nd.pa, nd.ca);
        accumulate(nd.pa, matmul(Tensor::ones(a.rows, 1), gy));
        break;
      }
      case Op::AddRowVec:
        if (nd.pa >= 0) accumulate(nd.pa, gy);
        if (nd.pb >= 0) accumulate(nd.pb, col_sums(gy));
        break;
      case Op::ConcatRows: {
        const int split = static_cast<int>(nd.s0);
        if (nd.pa >= 0) accumulate(nd.pa, slice_rows(gy, 0, split));
        if (nd.pb >= 0) accumulate(nd.pb, slice_rows(gy, split, gy.rows));
        break;
      }
      case Op::ConcatCols: {
        const int split = static_cast<int>(nd.s0);
        if (nd.pa >= 0) accumulate(nd.pa, slice_cols(gy, 0, split));
        if (nd.pb >= 0) accumulate(nd.pb, slice_cols(gy, split, gy.cols));
        break;
      }
      case Op::SliceRows: {
        const Tensor a = input(nd.pa, nd.ca);
        const int r0 = static_cast<int>(nd.s0);
        const int r1 = static_cast<int>(nd.s1);
        Tensor padded = concat_rows(Tensor::zeros(r0, a.cols), gy);
        padded = concat_rows(padded, Tensor::zeros(a.rows - r1, a.cols));
        accumulate(nd.pa, padded);
        break;
      }
      case Op::SliceCols: {
        const Tensor a = input(nd.pa, nd.ca);
        const int c0 = static_cast<int>(nd.s0);
        const int c1 = static_cast<int>(nd.s1);
        Tensor padded = concat_cols(Tensor::zeros(a.rows, c0), gy);
        padded = concat_cols(padded, Tensor::zeros(a.rows, a.cols - c1));
        accumulate(nd.pa, padded);
        break;
      }
    }
  }

  Gradients g;
  g.tape_ = this;
  g.adjoints_ = std::move(adj);
  return g;
}

Tensor Gradients::grad(const Tensor& t) const {
  if (!t.tracked() || t.tape != tape_)
    throw UsageError("Gradients::grad: tensor is not recorded on the backward tape");
  if (t.node < static_cast<int>(adjoints_.size())) {
    const Tensor& a = adjoints_[static_cast<size_t>(t.node)];
    if (a.data != nullptr) return a;
  }
  return Tensor::zeros(t.rows, t.cols);
}

bool Gradients::touched(const Tensor& t) const {
  if (!t.tracked() || t.tape != tape_) return false;
  return t.node < static_cast<int>(adjoints_.size()) &&
         adjoints_[static_cast<size_t>(t.node)].data != nullptr;
}

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
                  double eps) {
  Tape tape;
  const Tensor xt = tape.track(x);
  const Tensor y = f(tape, xt);
  const Tensor ad = tape.backward(y).grad(xt);

  auto eval = [&f](const Tensor& p) {
    Tape t;
    return f(t, t.track(p)).scalar();
  };

  double worst = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    std::vector<double> plus = *x.data;
    std::vector<double> minus = *x.data;
    plus[static_cast<size_t>(i)] += eps;
    minus[static_cast<size_t>(i)] -= eps;
    const double fd =
        (eval(Tensor::from_data(x.rows, x.cols, std::move(plus))) -
         eval(Tensor::from_data(x.rows, x.cols, std::move(minus)))) /
        (2.0 * eps);
    const double a = ad.at(i);
    const double rel = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace hogwild
