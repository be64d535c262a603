#include "hogwild/solvers.hpp"

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "hogwild/errors.hpp"

namespace hogwild {

namespace {

using EMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EVector = Eigen::VectorXd;

double frobenius(const Tensor& t) {
  double s = 0.0;
  for (int i = 0; i < t.size(); ++i) s += t.at(i) * t.at(i);
  return std::sqrt(s);
}

std::vector<Tensor> neighbor_rows(const Graph& g, int i, const Tensor& h) {
  Neighborhood nb = neighbors(g, i);
  std::vector<Tensor> rows;
  rows.reserve(nb.ids.size());
  for (int j : nb.ids) rows.push_back(slice_rows(h, j, j + 1));
  return rows;
}

}  // namespace

SolveResult fixed_point_solve(const std::function<Tensor(const Tensor&)>& map, const Graph& g,
                              const Tensor& h0, const SolveConfig& cfg) {
  if (cfg.tol <= 0.0) throw UsageError("fixed_point_solve: tolerance must be positive");
  (void)g;
  SolveResult result;
  Tensor h = h0.detached();
  for (int it = 0; it <= cfg.max_iters; ++it) {
    Tensor next = map(h).detached();
    double res = frobenius(sub(next, h));
    result.iterations = it;  // accepted steps so far; the probe is not counted
    result.residual = res;
    if (res <= cfg.tol) {
      result.h = h;
      result.converged = true;
      return result;
    }
    if (it == cfg.max_iters) break;
    h = next;
  }
  result.h = h;
  result.converged = false;
  return result;
}

Tensor energy_gradient(const NodeEnergy& e, const Graph& g, const Tensor& h, double* energy) {
  std::vector<double> grad(static_cast<size_t>(h.rows) * h.cols, 0.0);
  double total = 0.0;
  for (int i = 0; i < g.n; ++i) {
    LocalGradients lg =
        local_node_gradients(e, g, i, slice_rows(h, i, i + 1), neighbor_rows(g, i, h));
    total += lg.value;
    Neighborhood nb = neighbors(g, i);
    for (int c = 0; c < h.cols; ++c) grad[static_cast<size_t>(i) * h.cols + c] += lg.own.at(c);
    for (size_t idx = 0; idx < lg.nbr.size(); ++idx) {
      int j = nb.ids[idx];
      for (int c = 0; c < h.cols; ++c) {
        grad[static_cast<size_t>(j) * h.cols + c] += lg.nbr[idx].at(c);
      }
    }
  }
  if (energy) *energy = total;
  return Tensor::from_data(h.rows, h.cols, grad);
}

double estimate_lipschitz(const NodeEnergy& e, const Graph& g, const Tensor& h0,
                          int power_iters) {
  Tensor hess = assemble_energy_hessian(e, g, h0);
  int n = hess.rows;
  Eigen::Map<const EMatrix> m(hess.values().data(), n, n);
  Rng rng(0x9E3779B97F4A7C15ull);
  EVector v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
  v.normalize();
  for (int it = 0; it < power_iters; ++it) {
    EVector w = m * v;
    double norm = w.norm();
    if (norm == 0.0) return 1e-12;
    v = w / norm;
  }
  double rayleigh = v.dot(m * v);
  return std::max(rayleigh, 1e-12);
}

SolveResult energy_solve(const NodeEnergy& e, const Graph& g, const Tensor& h0,
                         const SolveConfig& cfg) {
  if (cfg.tol <= 0.0) throw UsageError("energy_solve: tolerance must be positive");
  SolveResult result;
  result.alpha = cfg.alpha > 0.0 ? cfg.alpha : 1.0 / estimate_lipschitz(e, g, h0);
  Tensor h = h0.detached();
  double prev_energy = 0.0;
  int increase_streak = 0;
  for (int it = 0; it <= cfg.max_iters; ++it) {
    double energy = 0.0;
    Tensor grad = energy_gradient(e, g, h, &energy);
    double res = frobenius(grad);
    result.residual = res;
    result.energy = energy;
    result.iterations = it;
    if (it > 0) {
      if (energy > prev_energy) {
        if (++increase_streak >= 50) {
          throw NumericError("energy_solve: diverging at alpha=" + std::to_string(result.alpha) +
                             " (50 consecutive energy increases)");
        }
      } else {
        increase_streak = 0;
      }
    }
    prev_energy = energy;
    if (res <= cfg.tol) {
      result.h = h;
      result.converged = true;
      return result;
    }
    if (it == cfg.max_iters) break;
    h = sub(h, scalar_mul(grad, result.alpha)).detached();
  }
  result.h = h;
  result.converged = false;
  return result;
}

Tensor assemble_energy_hessian(const NodeEnergy& e, const Graph& g, const Tensor& h) {
  const int k = h.cols;
  const int dim = g.n * k;
  if (dim > 512) {
    throw UsageError("assemble_energy_hessian: nk = " + std::to_string(dim) +
                     " exceeds the dense limit 512");
  }
  std::vector<double> hess(static_cast<size_t>(dim) * dim, 0.0);
  for (int i = 0; i < g.n; ++i) {
    Neighborhood nb = neighbors(g, i);
    Tape tape;
    Tensor own = tape.track(slice_rows(h, i, i + 1).detached());
    std::vector<Tensor> nbrs;
    std::vector<int> leaf_nodes{i};
    nbrs.reserve(nb.ids.size());
    for (int j : nb.ids) {
      nbrs.push_back(tape.track(slice_rows(h, j, j + 1).detached()));
      leaf_nodes.push_back(j);
    }
    Tensor e_i = e.node_energy(g, i, own, nbrs);
    Gradients first = tape.backward(e_i, /*create_graph=*/true);
    std::vector<Tensor> leaves{own};
    leaves.insert(leaves.end(), nbrs.begin(), nbrs.end());
    for (size_t a = 0; a < leaves.size(); ++a) {
      if (!first.touched(leaves[a])) continue;
      Tensor ga = first.grad(leaves[a]);
      if (!ga.tracked()) continue;  // constant gradient, second derivative 0
      for (int c = 0; c < k; ++c) {
        Tensor comp = slice_cols(ga, c, c + 1);
        Gradients second = tape.backward(comp);
        int row = leaf_nodes[a] * k + c;
        for (size_t b = 0; b < leaves.size(); ++b) {
          if (!second.touched(leaves[b])) continue;
          Tensor gb = second.grad(leaves[b]);
          for (int d = 0; d < k; ++d) {
            hess[static_cast<size_t>(row) * dim + leaf_nodes[b] * k + d] += gb.at(d);
          }
        }
      }
    }
  }
  return Tensor::from_data(dim, dim, hess);
}

Tensor assemble_ignn_jacobian(const Model& m, const Graph& g, const Tensor& h) {
  const int k = h.cols;
  const int dim = g.n * k;
  if (dim > 512) {
    throw UsageError("assemble_ignn_jacobian: nk = " + std::to_string(dim) +
                     " exceeds the dense limit 512");
  }
  Tape tape;
  BoundParams p = bind_params(m.params, nullptr);
  Tensor ht = tape.track(h.detached());
  Tensor f = ignn_map(p, m.cfg, g, ht);
  std::vector<double> jac(static_cast<size_t>(dim) * dim, 0.0);
  for (int i = 0; i < g.n; ++i) {
    Tensor row = slice_rows(f, i, i + 1);
    for (int c = 0; c < k; ++c) {
      Tensor comp = slice_cols(row, c, c + 1);
      Gradients grads = tape.backward(comp);
      Tensor gh = grads.grad(ht);
      int r = i * k + c;
      for (int idx = 0; idx < dim; ++idx) jac[static_cast<size_t>(r) * dim + idx] = gh.at(idx);
      jac[static_cast<size_t>(r) * dim + r] -= 1.0;
    }
  }
  return Tensor::from_data(dim, dim, jac);
}

Tensor assemble_optimality_jacobian(const Model& m, const Graph& g, const Tensor& h) {
  if (m.cfg.kind == ModelKind::Ignn) return assemble_ignn_jacobian(m, g, h);
  if (!uses_energy_descent(m.cfg.kind)) {
    throw UsageError("assemble_optimality_jacobian: model has no implicit optimality condition");
  }
  BoundParams p = bind_params(m.params, nullptr);
  auto e = make_node_energy(p, m.cfg, g);
  return assemble_energy_hessian(*e, g, h);
}

namespace {

std::map<std::string, Tensor> grads_by_name(const Gradients& grads, const BoundParams& p) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, handle] : p.handles) out.emplace(name, grads.grad(handle).detached());
  return out;
}

}  // namespace

std::map<std::string, Tensor> implicit_grad(const Model& m, const Graph& g, const Tensor& h_star,
                                            const LossBuilder& loss) {
  if (!is_implicit(m.cfg.kind)) {
    throw UsageError("implicit_grad: model is explicit; use ordinary backpropagation");
  }
  const int dim = h_star.rows * h_star.cols;

  // Direct terms: dL/dh* and dL/dtheta with h* held as a leaf.
  Tape loss_tape;
  BoundParams lp = bind_params(m.params, &loss_tape);
  Tensor hl = loss_tape.track(h_star.detached());
  Tensor l = loss(loss_tape, lp, hl);
  Gradients lg = loss_tape.backward(l);
  Tensor dl_dh = lg.grad(hl).detached();
  std::map<std::string, Tensor> result = grads_by_name(lg, lp);

  // Adjoint system (dg/dh)^T lambda = -(dL/dh)^T.
  Tensor jac = assemble_optimality_jacobian(m, g, h_star);
  Eigen::Map<const EMatrix> j(jac.values().data(), dim, dim);
  Eigen::Map<const EVector> rhs_map(dl_dh.values().data(), dim);
  EVector rhs = -rhs_map;
  EVector lambda;
  if (m.cfg.kind == ModelKind::Ignn) {
    lambda = j.transpose().partialPivLu().solve(rhs);
  } else {
    lambda = j.selfadjointView<Eigen::Lower>().ldlt().solve(rhs);
  }
  double solve_residual = (j.transpose() * lambda - rhs).norm() / (1.0 + rhs.norm());
  if (!std::isfinite(solve_residual) || solve_residual > 1e-8) {
    throw NumericError("implicit_grad: adjoint solve residual " + std::to_string(solve_residual) +
                       " exceeds 1e-8");
  }
  Tensor lambda_mat =
      Tensor::from_data(h_star.rows, h_star.cols,
                        std::vector<double>(lambda.data(), lambda.data() + dim));

  // theta-side term: backward of <lambda, g(H*, theta)>.
  Tape theta_tape;
  BoundParams tp = bind_params(m.params, &theta_tape);
  Tensor hg = theta_tape.track(h_star.detached());
  Tensor residual_expr;
  if (m.cfg.kind == ModelKind::Ignn) {
    residual_expr = sub(ignn_map(tp, m.cfg, g, hg), hg);
  } else {
    auto e = make_node_energy(tp, m.cfg, g);
    Tensor total = total_energy(*e, g, hg);
    Gradients ge = theta_tape.backward(total, /*create_graph=*/true);
    residual_expr = ge.grad(hg);
    if (!residual_expr.tracked()) {
      // Energy gradient constant in theta: no theta term to add.
      return result;
    }
  }
  Tensor s = sum_all(mul(residual_expr, lambda_mat));
  Gradients sg = theta_tape.backward(s);
  for (auto& [name, grad] : result) {
    Tensor extra = sg.grad(tp.at(name));
    grad = add(grad, extra).detached();
  }
  return result;
}

std::map<std::string, Tensor> unrolled_grad(const Model& m, const Graph& g, int steps,
                                            double alpha, const LossBuilder& loss) {
  if (!is_implicit(m.cfg.kind)) {
    throw UsageError("unrolled_grad: model is explicit");
  }
  Tape tape;
  BoundParams p = bind_params(m.params, &tape);
  Tensor h = Tensor::zeros(g.n, m.cfg.embed_dim);
  if (m.cfg.kind == ModelKind::Ignn) {
    for (int it = 0; it < steps; ++it) h = ignn_map(p, m.cfg, g, h);
  } else {
    if (alpha <= 0.0) throw UsageError("unrolled_grad: need a positive step size");
    auto e = make_node_energy(p, m.cfg, g);
    h = tape.track(h);
    for (int it = 0; it < steps; ++it) {
      // each step reaches earlier steps only through h, so the reverse pass
      // that builds grad-of-energy can stop there; without the cut the tape
      // grows quadratically in `steps`
      const int step_start = h.node + 1;
      Tensor total = total_energy(*e, g, h);
      Gradients grads = tape.backward(total, /*create_graph=*/true, step_start);
      Tensor gh = grads.grad(h);
      if (!gh.tracked()) gh = tape.track(gh);
      h = sub(h, scalar_mul(gh, alpha));
    }
  }
  Tensor l = loss(tape, p, h);
  Gradients lg = tape.backward(l);
  return grads_by_name(lg, p);
}

double min_eigenvalue_sym(const Tensor& m) {
  if (m.rows != m.cols) throw UsageError("min_eigenvalue_sym: matrix must be square");
  Eigen::Map<const EMatrix> e(m.values().data(), m.rows, m.cols);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(e);
  if (solver.info() != Eigen::Success) {
    throw NumericError("min_eigenvalue_sym: eigensolver failed");
  }
  return solver.eigenvalues().minCoeff();
}

}  // namespace hogwild
