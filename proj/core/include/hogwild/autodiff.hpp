#pragma once

#include <functional>
#include <vector>

#include "hogwild/tensor.hpp"

namespace hogwild {

// Reverse-mode tape. Operations on tracked tensors append nodes; backward()
// walks the recorded DAG once in reverse, accumulating adjoints at fan-out.
// With create_graph=true the adjoint computations are themselves recorded on
// the same tape, so gradients can be differentiated again (repeated reverse
// passes yield Hessian columns). Tapes are single-threaded; independent tapes
// never share state.

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  MatMul,
  Transpose,
  Relu,
  LeakyRelu,
  Softplus,
  Sigmoid,
  Tanh,
  Exp,
  Log,
  Square,
  Sqrt,
  Neg,
  ScalarMul,
  ScalarAdd,
  SumAll,
  ColSums,
  AddRowVec,
  ConcatRows,
  ConcatCols,
  SliceRows,
  SliceCols,
};

struct TapeNode {
  Op op = Op::Leaf;
  int pa = -1;  // parent node ids; -1 means the operand was a constant
  int pb = -1;
  Tensor ca;  // constant operands, kept for the backward rules
  Tensor cb;
  Tensor out;  // recorded output value
  double s0 = 0.0;  // op scalars: slope / factor / slice bounds
  double s1 = 0.0;
};

class Tape;

class Gradients {
 public:
  // Gradient of the backward root w.r.t. `t`. A tracked tensor the root does
  // not depend on yields zeros of its shape.
  Tensor grad(const Tensor& t) const;
  bool touched(const Tensor& t) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<Tensor> adjoints_;
};

class Tape {
 public:
  // Registers `value` as a leaf and returns the tracked handle.
  Tensor track(const Tensor& value);

  // Reverse pass from a scalar output. Each DAG node is visited exactly once.
  // Nodes with index < `frontier` are treated as leaves: they receive
  // adjoints but the pass never descends into their inputs. Iterated
  // create_graph passes (unrolled solvers) set the frontier to their step's
  // first node so per-step cost tracks the step, not the whole tape.
  Gradients backward(const Tensor& scalar_output, bool create_graph = false, int frontier = 0);

  size_t size() const { return nodes_.size(); }

  // Internal: op implementations append their result and get the tracked handle.
  Tensor record_result(TapeNode node, Tensor value);
  const TapeNode& node_at(int id) const { return nodes_[static_cast<size_t>(id)]; }

 private:
  std::vector<TapeNode> nodes_;
};

// Elementwise binary ops accept equal shapes, or a 1x1 operand broadcast
// against a matrix. No other broadcasting exists.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor softplus(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor neg(const Tensor& a);

Tensor scalar_mul(const Tensor& a, double s);
Tensor scalar_add(const Tensor& a, double s);

Tensor sum_all(const Tensor& a);              // -> 1x1
Tensor col_sums(const Tensor& a);             // (r x c) -> (1 x c)
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // v is 1 x c, added to every row

Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, int r0, int r1);  // half-open [r0, r1)
Tensor slice_cols(const Tensor& a, int c0, int c1);

// Constant copy of a tracked tensor (gradient barrier).
Tensor detach(const Tensor& a);

// Central-finite-difference check of reverse-mode gradients. `f` must build a
// scalar from the tracked input. Returns max_i |ad_i - fd_i| / max(1, |ad_i|, |fd_i|).
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
                  double eps);

}  // namespace hogwild
