#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hogwild/async_sim.hpp"
#include "hogwild/models.hpp"
#include "hogwild/solvers.hpp"
#include "hogwild/tasks.hpp"

namespace hogwild {

// n x 1 integer class labels -> n x classes one-hot matrix.
Tensor one_hot_targets(const Tensor& labels, int classes);

// Scalar training loss (1x1, differentiable through `predictions`):
// classification = mean elementwise binary cross entropy against one-hot
// targets (predictions are logits); scalar regression = mean squared error;
// coordinates = mean over edges of (|y_i - y_j| - e_ij)^2.
Tensor task_loss(TaskKind task, const Graph& g, const Tensor& predictions);

// Test metric in percent: classification error rate; regression
// 100 * RMSE / RMS(targets); coordinates the same over edge-distance
// residuals. Zero-RMS targets make the metric undefined (NumericError).
struct MetricAccumulator {
  TaskKind task = TaskKind::Chains;
  double sq_err = 0.0;
  double sq_ref = 0.0;
  long long wrong = 0;
  long long total = 0;

  explicit MetricAccumulator(TaskKind t) : task(t) {}
  void add(const Graph& g, const Tensor& predictions);
  double value() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  long long step = 0;
};

// One optimizer step: decoupled weight decay p *= 1 - lr*wd first, then the
// bias-corrected Adam update. Parameters without a gradient entry only decay.
// The caller re-projects constraints afterwards.
void adam_step(ParamSet& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               double lr, const AdamConfig& cfg);

struct Schedule {
  double base = 0.002;
  double rate = 0.98;
  int interval = 200;
  int max_epochs = 5000;
};

// Piecewise-constant exponential decay: base * rate^(epoch / interval).
double lr_at(const Schedule& schedule, int epoch);

struct TrainConfig {
  Schedule schedule;
  int epochs = 5000;
  AdamConfig adam;
  SolveConfig solve{0.0, 100000, 1e-6};
  // implicit-vs-unrolled gradient tripwire on a 4-node probe
  bool sentinel = true;
  int sentinel_every = 500;
  int sentinel_steps = 500;
  double sentinel_tol = 1e-3;
};

struct SolveStats {
  long long solves = 0;
  long long iterations = 0;
  long long failures = 0;
};

struct RunRecord {
  std::string config_hash;
  int fold = 0;
  std::uint64_t seed = 0;
  std::vector<double> epoch_losses;
  double final_metric = 0.0;
  bool failed = false;
  SolveStats stats;
};

void save_run_record(const RunRecord& rec, const std::string& path);
RunRecord load_run_record(const std::string& path);

struct SyncResult {
  Tensor h;
  Tensor predictions;
  SolveResult solve;  // iterations 0 for explicit stacks
};

// Synchronous inference: explicit stacks run their layers; implicit models
// solve for the embedding (fixed point or energy minimum) at `solve` accuracy.
SyncResult sync_infer(const Model& m, const Graph& g, const SolveConfig& solve);

// Hogwild inference: dispatches to the finite-layer or gradient-descent
// simulator; an alpha <= 0 for energy models becomes 1/L on this graph.
AsyncTrace async_infer(const Model& m, const Graph& g, AsyncConfig cfg);

struct GraphGrad {
  std::map<std::string, Tensor> grads;
  double loss = 0.0;
};

// Loss gradient on one graph: backprop through the layer stack for explicit
// models; forward solve (warm-started via warm_io when non-null) plus the
// implicit adjoint for the rest. Non-convergence raises NumericError.
GraphGrad graph_gradient(const Model& m, TaskKind task, const Graph& g, const SolveConfig& solve,
                         Tensor* warm_io, SolveStats* stats);

// Readout + task loss as a solver LossBuilder (shared by the implicit path,
// the unrolled oracle, and the drift sentinel).
LossBuilder make_loss_builder(const Model& m, TaskKind task, const Graph& g);

// Full-batch training of one (fold, seed) run. On a solve failure or
// non-finite loss the epoch is aborted and retried once with the learning
// rate halved and cold restarts; a second failure marks the run failed.
RunRecord train_single(Model& m, TaskKind task, const Dataset& ds, const SplitManifest& split,
                       const TrainConfig& cfg, const std::string& config_hash,
                       std::uint64_t seed);

// Mean metric over the listed graphs under synchronous inference. With
// threads > 1 the graphs are solved concurrently; per-graph statistics are
// merged in id order, so the result does not depend on scheduling.
double evaluate(const Model& m, TaskKind task, const Dataset& ds, const std::vector<int>& ids,
                const SolveConfig& solve, int threads = 1);

// Compares the implicit gradient against the unrolled oracle on a 4-node
// probe assembled from `sample`'s features; drift beyond tol raises
// NumericError.
void check_gradient_drift(const Model& m, TaskKind task, const Graph& sample, int steps,
                          double tol, const SolveConfig& solve);

}  // namespace hogwild
