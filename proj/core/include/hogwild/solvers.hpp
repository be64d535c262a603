#pragma once

#include <functional>
#include <map>
#include <string>

#include "hogwild/models.hpp"

namespace hogwild {

struct SolveConfig {
  double alpha = 0.0;  // energy descent step; <= 0 selects 1/L automatically
  int max_iters = 100000;
  double tol = 1e-6;  // gradient norm (energy) / residual (fixed point)
};

struct SolveResult {
  Tensor h;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  double alpha = 0.0;   // step size actually used (energy case)
  double energy = 0.0;  // final energy (energy case)
};

// Iterates H <- F(H) until ||F(H) - H||_F <= tol. The convergence probe at
// the warm-start point is not counted as an iteration.
SolveResult fixed_point_solve(const std::function<Tensor(const Tensor&)>& map, const Graph& g,
                              const Tensor& h0, const SolveConfig& cfg);

// Full-gradient descent on the node-energy sum. Raises NumericError (naming
// the step size) after 50 consecutive energy increases. The evaluator must be
// tape-free (see local_node_gradients).
SolveResult energy_solve(const NodeEnergy& e, const Graph& g, const Tensor& h0,
                         const SolveConfig& cfg);

// Gradient of the total energy, assembled from per-node local gradients;
// optionally returns the energy value.
Tensor energy_gradient(const NodeEnergy& e, const Graph& g, const Tensor& h,
                       double* energy = nullptr);

// Largest Hessian eigenvalue at h0 by 20 power-iteration steps on the
// assembled Hessian; used as the Lipschitz constant for the 1/L step.
double estimate_lipschitz(const NodeEnergy& e, const Graph& g, const Tensor& h0,
                          int power_iters = 20);

// Dense (nk x nk) second derivative of the energy, assembled per-node via
// repeated reverse passes; row-major vec convention (node-major, component
// within node). UsageError above nk = 512.
Tensor assemble_energy_hessian(const NodeEnergy& e, const Graph& g, const Tensor& h);

// dF/dH - I for the contractive map, one reverse pass per output component.
Tensor assemble_ignn_jacobian(const Model& m, const Graph& g, const Tensor& h);

// Jacobian of the optimality condition g(H) = 0 at h: the energy Hessian for
// energy-based models, dF/dH - I for the fixed-point model.
Tensor assemble_optimality_jacobian(const Model& m, const Graph& g, const Tensor& h);

// Builds a tracked scalar loss from embeddings (readout included); used for
// both implicit and unrolled gradients so the two share one definition.
using LossBuilder = std::function<Tensor(Tape&, const BoundParams&, const Tensor& h)>;

// Gradient of loss(h*(theta), theta) through the implicit definition of h*:
// solves the adjoint system (dg/dh)^T lambda = -(dL/dh)^T with a symmetric
// factorization (energy) or LU (fixed point), then adds the theta terms.
// NumericError if the adjoint solve residual exceeds 1e-8.
std::map<std::string, Tensor> implicit_grad(const Model& m, const Graph& g, const Tensor& h_star,
                                            const LossBuilder& loss);

// Oracle: gradient through `steps` explicitly unrolled solver iterations from
// H = 0 (descent with fixed alpha for energy models, map iteration for the
// fixed-point model). Exact for explicit stacks as steps -> convergence.
std::map<std::string, Tensor> unrolled_grad(const Model& m, const Graph& g, int steps,
                                            double alpha, const LossBuilder& loss);

// Smallest eigenvalue of a symmetric matrix (dense eigensolver).
double min_eigenvalue_sym(const Tensor& m);

}  // namespace hogwild
