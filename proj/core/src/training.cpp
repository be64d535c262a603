#include "hogwild/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "hogwild/autodiff.hpp"
#include "hogwild/errors.hpp"

namespace hogwild {

using nlohmann::json;

Tensor one_hot_targets(const Tensor& labels, int classes) {
  if (labels.cols != 1) throw UsageError("one_hot_targets: labels must be a column");
  std::vector<double> data(static_cast<size_t>(labels.rows) * classes, 0.0);
  for (int i = 0; i < labels.rows; ++i) {
    double v = labels.at(i, 0);
    int k = static_cast<int>(std::llround(v));
    if (std::abs(v - k) > 1e-9 || k < 0 || k >= classes) {
      throw ConfigError("one_hot_targets: label " + std::to_string(v) + " is not a class in [0," +
                        std::to_string(classes) + ")");
    }
    data[static_cast<size_t>(i) * classes + k] = 1.0;
  }
  return Tensor::from_data(labels.rows, classes, data);
}

Tensor task_loss(TaskKind task, const Graph& g, const Tensor& predictions) {
  if (!g.has_targets()) throw UsageError("task_loss: graph has no targets");
  if (predictions.rows != g.n) throw ShapeError("task_loss: one prediction row per node required");
  if (task == TaskKind::Coordinates) {
    if (g.pairs.empty()) throw UsageError("task_loss: coordinates loss needs at least one edge");
    // floor keeps the distance differentiable when two predictions coincide
    // (a dead readout maps every node to the same point); it is below double
    // rounding for any distance above 1e-8, so regular losses are unchanged
    constexpr double kDistSqFloor = 1e-24;
    Tensor acc;
    for (size_t idx = 0; idx < g.pairs.size(); ++idx) {
      auto [i, j] = g.pairs[idx];
      Tensor diff = sub(slice_rows(predictions, i, i + 1), slice_rows(predictions, j, j + 1));
      Tensor dist = sqrt_t(scalar_add(sum_all(square(diff)), kDistSqFloor));
      Tensor resid = square(scalar_add(dist, -g.edge_feats.at(static_cast<int>(idx), 0)));
      acc = acc.empty() ? resid : add(acc, resid);
    }
    return scalar_mul(acc, 1.0 / static_cast<double>(g.pairs.size()));
  }
  if (task_is_classification(task)) {
    Tensor targets = one_hot_targets(g.y, predictions.cols);
    Tensor elems = sub(softplus(predictions), mul(predictions, targets));
    return scalar_mul(sum_all(elems), 1.0 / static_cast<double>(predictions.size()));
  }
  if (!predictions.same_shape(g.y)) throw ShapeError("task_loss: prediction/target shape mismatch");
  return scalar_mul(sum_all(square(sub(predictions, g.y))),
                    1.0 / static_cast<double>(predictions.size()));
}

void MetricAccumulator::add(const Graph& g, const Tensor& predictions) {
  if (predictions.rows != g.n) throw ShapeError("metric: one prediction row per node required");
  if (task == TaskKind::Coordinates) {
    for (size_t idx = 0; idx < g.pairs.size(); ++idx) {
      auto [i, j] = g.pairs[idx];
      double dx = predictions.at(i, 0) - predictions.at(j, 0);
      double dy = predictions.at(i, 1) - predictions.at(j, 1);
      double d = std::sqrt(dx * dx + dy * dy);
      double e = g.edge_feats.at(static_cast<int>(idx), 0);
      sq_err += (d - e) * (d - e);
      sq_ref += e * e;
      ++total;
    }
    return;
  }
  for (int i = 0; i < g.n; ++i) {
    if (task_is_classification(task)) {
      int best = 0;
      for (int c = 1; c < predictions.cols; ++c) {
        if (predictions.at(i, c) > predictions.at(i, best)) best = c;
      }
      if (best != static_cast<int>(std::llround(g.y.at(i, 0)))) ++wrong;
    } else {
      double d = predictions.at(i, 0) - g.y.at(i, 0);
      sq_err += d * d;
      sq_ref += g.y.at(i, 0) * g.y.at(i, 0);
    }
    ++total;
  }
}

double MetricAccumulator::value() const {
  if (total == 0) throw NumericError("metric: no observations");
  if (task_is_classification(task)) {
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(total);
  }
  if (sq_ref <= 0.0) throw NumericError("metric: undefined for zero-RMS targets");
  return 100.0 * std::sqrt(sq_err / sq_ref);
}

void adam_step(ParamSet& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               double lr, const AdamConfig& cfg) {
  state.step += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, param] : params.items) {
    const Tensor& value = param.value;
    std::vector<double> p = value.values();
    if (cfg.weight_decay > 0.0) {
      for (double& x : p) x *= 1.0 - lr * cfg.weight_decay;
    }
    auto git = grads.find(name);
    if (git != grads.end()) {
      const Tensor& grad = git->second;
      if (!grad.same_shape(value)) throw ShapeError("adam_step: gradient shape mismatch at " + name);
      auto& m = state.m[name];
      auto& v = state.v[name];
      if (m.empty()) m.assign(p.size(), 0.0);
      if (v.empty()) v.assign(p.size(), 0.0);
      for (size_t i = 0; i < p.size(); ++i) {
        double gi = grad.at(static_cast<int>(i));
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
        double mh = m[i] / bc1;
        double vh = v[i] / bc2;
        p[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
      }
    }
    params.set_value(name, Tensor::from_data(value.rows, value.cols, std::move(p)));
  }
}

double lr_at(const Schedule& schedule, int epoch) {
  if (epoch < 0) throw UsageError("lr_at: negative epoch");
  return schedule.base * std::pow(schedule.rate, static_cast<double>(epoch / schedule.interval));
}

void save_run_record(const RunRecord& rec, const std::string& path) {
  json doc;
  doc["config_hash"] = rec.config_hash;
  doc["fold"] = rec.fold;
  doc["seed"] = rec.seed;
  doc["epoch_losses"] = rec.epoch_losses;
  doc["final_metric"] = rec.failed ? json(nullptr) : json(rec.final_metric);
  doc["failed"] = rec.failed;
  doc["solver_stats"] = {{"solves", rec.stats.solves},
                         {"iterations", rec.stats.iterations},
                         {"failures", rec.stats.failures}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("save_run_record: cannot open " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw UsageError("save_run_record: write failure on " + path);
}

RunRecord load_run_record(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_run_record: cannot open " + path);
  json doc;
  try {
    in >> doc;
    RunRecord rec;
    rec.config_hash = doc.at("config_hash").get<std::string>();
    rec.fold = doc.at("fold").get<int>();
    rec.seed = doc.at("seed").get<std::uint64_t>();
    rec.epoch_losses = doc.at("epoch_losses").get<std::vector<double>>();
    rec.failed = doc.at("failed").get<bool>();
    rec.final_metric = doc.at("final_metric").is_null()
                           ? std::numeric_limits<double>::quiet_NaN()
                           : doc.at("final_metric").get<double>();
    const json& stats = doc.at("solver_stats");
    rec.stats.solves = stats.at("solves").get<long long>();
    rec.stats.iterations = stats.at("iterations").get<long long>();
    rec.stats.failures = stats.at("failures").get<long long>();
    return rec;
  } catch (const json::exception& e) {
    throw ConfigError("load_run_record: " + path + ": " + e.what());
  }
}

namespace {

SolveResult solve_embedding(const Model& m, const Graph& g, const Tensor& h0,
                            const SolveConfig& solve) {
  BoundParams bp = bind_params(m.params, nullptr);
  if (m.cfg.kind == ModelKind::Ignn) {
    return fixed_point_solve([&](const Tensor& h) { return ignn_map(bp, m.cfg, g, h); }, g, h0,
                             solve);
  }
  std::unique_ptr<NodeEnergy> energy = make_node_energy(bp, m.cfg, g);
  return energy_solve(*energy, g, h0, solve);
}

double loss_value(const Model& m, TaskKind task, const Graph& g, const Tensor& h) {
  BoundParams bp = bind_params(m.params, nullptr);
  return task_loss(task, g, readout(bp, m.cfg, h)).scalar();
}

double descent_alpha(const Model& m, const Graph& g) {
  if (!uses_energy_descent(m.cfg.kind)) return 0.0;
  BoundParams bp = bind_params(m.params, nullptr);
  std::unique_ptr<NodeEnergy> energy = make_node_energy(bp, m.cfg, g);
  double lip = estimate_lipschitz(*energy, g, Tensor::zeros(g.n, energy->dim()));
  if (!(lip > 0.0)) throw NumericError("descent_alpha: nonpositive curvature estimate");
  return 1.0 / lip;
}

}  // namespace

LossBuilder make_loss_builder(const Model& m, TaskKind task, const Graph& g) {
  const ModelConfig cfg = m.cfg;
  const Graph* gp = &g;
  return [cfg, task, gp](Tape&, const BoundParams& bp, const Tensor& h) {
    return task_loss(task, *gp, readout(bp, cfg, h));
  };
}

SyncResult sync_infer(const Model& m, const Graph& g, const SolveConfig& solve) {
  SyncResult out;
  BoundParams bp = bind_params(m.params, nullptr);
  if (!is_implicit(m.cfg.kind)) {
    out.h = explicit_forward(bp, m.cfg, g);
    out.solve.h = out.h;
    out.solve.converged = true;
  } else {
    out.solve = solve_embedding(m, g, Tensor::zeros(g.n, embedding_dim(m.cfg)), solve);
    if (!out.solve.converged) throw NumericError("sync_infer: forward solve did not converge");
    out.h = out.solve.h;
  }
  out.predictions = readout(bp, m.cfg, out.h).detached();
  return out;
}

AsyncTrace async_infer(const Model& m, const Graph& g, AsyncConfig cfg) {
  if (uses_energy_descent(m.cfg.kind)) {
    if (cfg.alpha <= 0.0) cfg.alpha = descent_alpha(m, g);
    std::unique_ptr<OptAsyncModel> sim = make_opt_async(m, g);
    return simulate(*sim, g, cfg);
  }
  std::unique_ptr<FiniteAsyncModel> sim = make_finite_async(m, g);
  return simulate(*sim, g, cfg);
}

GraphGrad graph_gradient(const Model& m, TaskKind task, const Graph& g, const SolveConfig& solve,
                         Tensor* warm_io, SolveStats* stats) {
  GraphGrad out;
  if (!is_implicit(m.cfg.kind)) {
    Tape tape;
    BoundParams bp = bind_params(m.params, &tape);
    Tensor h = explicit_forward(bp, m.cfg, g);
    Tensor loss = task_loss(task, g, readout(bp, m.cfg, h));
    Gradients grads = tape.backward(loss);
    for (const auto& [name, param] : m.params.items) {
      out.grads[name] = grads.grad(bp.at(name)).detached();
    }
    out.loss = loss.scalar();
    return out;
  }
  Tensor h0 = (warm_io && !warm_io->empty()) ? *warm_io
                                             : Tensor::zeros(g.n, embedding_dim(m.cfg));
  SolveResult sr = solve_embedding(m, g, h0, solve);
  if (stats) {
    stats->solves += 1;
    stats->iterations += sr.iterations;
  }
  if (!sr.converged) {
    if (stats) stats->failures += 1;
    throw NumericError("graph_gradient: forward solve did not converge (residual " +
                       std::to_string(sr.residual) + ")");
  }
  if (warm_io) *warm_io = sr.h;
  out.grads = implicit_grad(m, g, sr.h, make_loss_builder(m, task, g));
  out.loss = loss_value(m, task, g, sr.h);
  return out;
}

void check_gradient_drift(const Model& m, TaskKind task, const Graph& sample, int steps,
                          double tol, const SolveConfig& solve) {
  if (!is_implicit(m.cfg.kind)) return;
  const int n = 4;
  std::vector<double> x, y;
  for (int i = 0; i < n; ++i) {
    int src = i % sample.n;
    for (int c = 0; c < sample.x.cols; ++c) x.push_back(sample.x.at(src, c));
    for (int c = 0; c < sample.y.cols; ++c) y.push_back(sample.y.at(src, c));
  }
  std::vector<std::pair<int, int>> pairs{{0, 1}, {1, 2}, {2, 3}};
  Tensor e;
  if (m.cfg.edge_feat_dim > 0) {
    std::vector<double> ev;
    for (size_t p = 0; p < pairs.size(); ++p) {
      for (int c = 0; c < m.cfg.edge_feat_dim; ++c) {
        ev.push_back(!sample.pairs.empty() ? sample.edge_feats.at(0, c) : 0.25);
      }
    }
    e = Tensor::from_data(static_cast<int>(pairs.size()), m.cfg.edge_feat_dim, ev);
  }
  Graph probe = make_graph(n, pairs, Tensor::from_data(n, sample.x.cols, x), e,
                           Tensor::from_data(n, sample.y.cols, y));
  SolveResult sr = solve_embedding(m, probe, Tensor::zeros(n, embedding_dim(m.cfg)), solve);
  if (!sr.converged) throw NumericError("gradient drift probe: forward solve did not converge");
  LossBuilder lb = make_loss_builder(m, task, probe);
  std::map<std::string, Tensor> gi = implicit_grad(m, probe, sr.h, lb);
  double alpha = uses_energy_descent(m.cfg.kind) ? descent_alpha(m, probe) : 0.0;
  std::map<std::string, Tensor> gu = unrolled_grad(m, probe, steps, alpha, lb);
  double num = 0.0, den = 0.0;
  for (const auto& [name, gref] : gu) {
    auto it = gi.find(name);
    for (int i = 0; i < gref.size(); ++i) {
      double a = it != gi.end() ? it->second.at(i) : 0.0;
      double b = gref.at(i);
      num += (a - b) * (a - b);
      den += b * b;
    }
  }
  double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
  if (!(rel <= tol)) {
    throw NumericError("implicit gradient drifted from the unrolled oracle (relative " +
                       std::to_string(rel) + ")");
  }
}

namespace {

void accumulate(std::map<std::string, Tensor>& acc, const std::map<std::string, Tensor>& grads,
                double scale) {
  for (const auto& [name, g] : grads) {
    Tensor scaled = scalar_mul(g, scale);
    auto it = acc.find(name);
    if (it == acc.end()) {
      acc.emplace(name, scaled);
    } else {
      it->second = add(it->second, scaled);
    }
  }
}

}  // namespace

RunRecord train_single(Model& m, TaskKind task, const Dataset& ds, const SplitManifest& split,
                       const TrainConfig& cfg, const std::string& config_hash,
                       std::uint64_t seed) {
  if (split.train.empty()) throw UsageError("train_single: empty training split");
  RunRecord rec;
  rec.config_hash = config_hash;
  rec.fold = split.fold;
  rec.seed = seed;
  AdamState adam;
  std::map<int, Tensor> warm;
  SolveConfig solve = cfg.solve;
  double lr_scale = 1.0;
  bool halved = false;
  const double inv_batch = 1.0 / static_cast<double>(split.train.size());

  int epoch = 0;
  while (epoch < cfg.epochs && epoch < cfg.schedule.max_epochs) {
    std::map<std::string, Tensor> acc;
    double loss_sum = 0.0;
    bool ok = true;
    for (int id : split.train) {
      try {
        GraphGrad gg = graph_gradient(m, task, ds.graphs[id], solve, &warm[id], &rec.stats);
        if (!std::isfinite(gg.loss)) throw NumericError("non-finite training loss");
        accumulate(acc, gg.grads, inv_batch);
        loss_sum += gg.loss * inv_batch;
      } catch (const NumericError&) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      if (halved) {
        rec.failed = true;
        break;
      }
      // one retry: halve the learning rate from here on, drop warm starts,
      // give the solver more room
      halved = true;
      lr_scale = 0.5;
      warm.clear();
      solve.max_iters *= 2;
      continue;
    }
    rec.epoch_losses.push_back(loss_sum);
    adam_step(m.params, acc, adam, lr_at(cfg.schedule, epoch) * lr_scale, cfg.adam);
    project_constraints(m.params);
    ++epoch;
    if (cfg.sentinel && is_implicit(m.cfg.kind) && cfg.sentinel_every > 0 &&
        epoch % cfg.sentinel_every == 0) {
      check_gradient_drift(m, task, ds.graphs[split.train[0]], cfg.sentinel_steps,
                           cfg.sentinel_tol, solve);
    }
  }

  if (!rec.failed) {
    SolveConfig eval_solve = solve;
    eval_solve.tol = 1e-8;
    rec.final_metric = evaluate(m, task, ds, split.test, eval_solve);
  } else {
    rec.final_metric = std::numeric_limits<double>::quiet_NaN();
  }
  return rec;
}

double evaluate(const Model& m, TaskKind task, const Dataset& ds, const std::vector<int>& ids,
                const SolveConfig& solve, int threads) {
  if (ids.empty()) throw UsageError("evaluate: empty id list");
  for (int id : ids) {
    if (id < 0 || id >= static_cast<int>(ds.graphs.size())) {
      throw UsageError("evaluate: graph id out of range");
    }
  }
  std::vector<MetricAccumulator> parts(ids.size(), MetricAccumulator(task));
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto work = [&](size_t start, size_t stride) {
    for (size_t idx = start; idx < ids.size(); idx += stride) {
      try {
        SyncResult sr = sync_infer(m, ds.graphs[ids[idx]], solve);
        parts[idx].add(ds.graphs[ids[idx]], sr.predictions);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (threads <= 1 || ids.size() < 2) {
    work(0, 1);
  } else {
    size_t workers = std::min<size_t>(threads, ids.size());
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  MetricAccumulator acc(task);
  for (const MetricAccumulator& part : parts) {
    acc.sq_err += part.sq_err;
    acc.sq_ref += part.sq_ref;
    acc.wrong += part.wrong;
    acc.total += part.total;
  }
  return acc.value();
}

}  // namespace hogwild
