#include "hogwild/async_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <thread>

#include <json.hpp>

#include "hogwild/autodiff.hpp"
#include "hogwild/errors.hpp"
#include "hogwild/rng.hpp"
#include "hogwild/solvers.hpp"

namespace hogwild {

namespace {

double frobenius(const Tensor& t) {
  double s = 0.0;
  for (int i = 0; i < t.size(); ++i) s += t.at(i) * t.at(i);
  return std::sqrt(s);
}

struct HistoryEntry {
  long long stamp = 0;
  Tensor h;
  std::vector<Tensor> g_out;  // aligned with the publisher's neighbor list
};

struct SimNode {
  Tensor h;
  int layer = 0;
  bool done = false;
  long long next_wake = 0;
  std::vector<long long> tau;  // per neighbor slot
  std::vector<HistoryEntry> hist;
  Tensor g_self;
  std::vector<Tensor> g_out;
  Tensor out;
  bool has_out = false;
};

// All reads in a tick happen before any of the tick's publishes, so the
// last D+1 published values per node always contain the entry for any
// admissible view timestamp (stamps are distinct; at most D publishes can be
// newer than the one a reader needs).
class SimState {
 public:
  SimState(const Graph& g, const AsyncConfig& cfg, int width)
      : g_(g), cfg_(cfg), rng_(cfg.seed), width_(width), capacity_(cfg.delay + 1) {
    if (cfg.stagger < 1) throw UsageError("simulate: stagger must be >= 1");
    if (cfg.delay < 0) throw UsageError("simulate: delay must be >= 0");
    nodes_.resize(g.n);
    reverse_slot_.resize(g.n);
    for (int i = 0; i < g.n; ++i) {
      const auto& nbrs = g.adjacency[i];
      nodes_[i].tau.assign(nbrs.size(), 0);
      reverse_slot_[i].resize(nbrs.size());
      for (size_t idx = 0; idx < nbrs.size(); ++idx) {
        const auto& back = g.adjacency[nbrs[idx]];
        reverse_slot_[i][idx] = static_cast<int>(
            std::lower_bound(back.begin(), back.end(), i) - back.begin());
      }
    }
    trace_.stagger = cfg.stagger;
    trace_.delay = cfg.delay;
  }

  void publish(int i, long long stamp, Tensor h, std::vector<Tensor> g_out) {
    auto& hist = nodes_[i].hist;
    hist.push_back(HistoryEntry{stamp, std::move(h), std::move(g_out)});
    if (static_cast<int>(hist.size()) > capacity_) hist.erase(hist.begin());
  }

  const HistoryEntry& read(int j, long long tau) const {
    const auto& hist = nodes_[j].hist;
    for (auto it = hist.rbegin(); it != hist.rend(); ++it) {
      if (it->stamp <= tau) return *it;
    }
    throw NumericError("simulate: history underrun reading node " + std::to_string(j) +
                       " at stamp " + std::to_string(tau));
  }

  void schedule_first_wakes() {
    for (auto& node : nodes_) node.next_wake = rng_.uniform_int(1, cfg_.stagger);
  }

  // Redraws the view timestamps of node i at time t and collects the stale
  // packets. Also schedules the next wake (all randomness happens here, in
  // node order, keeping threaded compute deterministic).
  void draw_views(int i, long long t, AsyncEvent& event, std::vector<Tensor>& h_views,
                  std::vector<Tensor>* g_views) {
    SimNode& node = nodes_[i];
    const auto& nbrs = g_.adjacency[i];
    event.views.push_back(ViewStamp{i, t});
    for (size_t idx = 0; idx < nbrs.size(); ++idx) {
      long long limit = std::min<long long>(t - node.tau[idx], cfg_.delay);
      long long stale = rng_.uniform_int(0, limit);
      node.tau[idx] = t - stale;
      event.views.push_back(ViewStamp{nbrs[idx], node.tau[idx]});
      const HistoryEntry& entry = read(nbrs[idx], node.tau[idx]);
      h_views.push_back(entry.h);
      if (g_views) g_views->push_back(entry.g_out[reverse_slot_[i][idx]]);
    }
    node.next_wake = t + rng_.uniform_int(1, cfg_.stagger);
  }

  Tensor stack_state() const {
    std::vector<double> data;
    data.reserve(static_cast<size_t>(g_.n) * width_);
    for (const auto& node : nodes_) {
      for (int c = 0; c < width_; ++c) data.push_back(node.h.at(c));
    }
    return Tensor::from_data(g_.n, width_, data);
  }

  const Graph& g_;
  AsyncConfig cfg_;
  Rng rng_;
  int width_;
  int capacity_;
  std::vector<SimNode> nodes_;
  std::vector<std::vector<int>> reverse_slot_;
  AsyncTrace trace_;
};

struct PendingUpdate {
  int node = -1;
  int layer = 0;
  Tensor h_own;
  std::vector<Tensor> h_views;
  std::vector<Tensor> g_views;
  // results
  Tensor h_new;
  LocalGradients lg;
};

void run_compute_phase(std::vector<PendingUpdate>& pending, bool threads,
                       const std::function<void(PendingUpdate&)>& compute) {
  if (!threads || pending.size() < 2) {
    for (auto& p : pending) compute(p);
    return;
  }
  unsigned workers = std::max(2u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                     static_cast<unsigned>(pending.size())));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (size_t idx = w; idx < pending.size(); idx += workers) compute(pending[idx]);
    });
  }
  for (auto& th : pool) th.join();
}

template <typename InitFn, typename TickFn, typename FinishFn>
AsyncTrace run_loop(SimState& state, long long budget, bool budget_bound, InitFn&& init,
                    TickFn&& tick, FinishFn&& finish) {
  init();
  state.schedule_first_wakes();
  long long t = 0;
  while (true) {
    bool anyone_left = false;
    for (const auto& node : state.nodes_) anyone_left |= !node.done;
    if (!anyone_left) break;
    if (budget_bound && state.trace_.updates >= budget) break;
    ++t;
    tick(t);
    state.trace_.ticks = t;
    if (state.cfg_.residual_every > 0 && t % state.cfg_.residual_every == 0) {
      double r = finish(false);
      if (std::isfinite(r)) state.trace_.residual_curve.push_back(r);
    }
  }
  finish(true);
  state.trace_.final_h = state.stack_state();
  return std::move(state.trace_);
}

AsyncTrace simulate_finite_impl(const FiniteAsyncModel& model, const Graph& g,
                                const AsyncConfig& cfg) {
  SimState state(g, cfg, model.width());
  const int layers = model.layers();
  const bool budget_bound = layers < 0;
  long long budget = cfg.total_updates > 0
                         ? cfg.total_updates
                         : 400LL * g.n * (cfg.stagger + cfg.delay);

  auto init = [&]() {
    for (int i = 0; i < g.n; ++i) {
      state.nodes_[i].h = model.initial_state(g, i).detached();
      state.publish(i, 0, state.nodes_[i].h, {});
    }
  };

  auto tick = [&](long long t) {
    std::vector<PendingUpdate> pending;
    for (int i = 0; i < g.n; ++i) {
      SimNode& node = state.nodes_[i];
      if (node.done || node.next_wake != t) continue;
      if (layers >= 0 && node.layer == layers) {
        node.out = model.output(g, i, node.h).detached();
        node.has_out = true;
        node.done = true;
        state.trace_.events.push_back(AsyncEvent{t, i, 'r', {}});
        continue;
      }
      PendingUpdate p;
      p.node = i;
      p.layer = node.layer;
      p.h_own = node.h;
      AsyncEvent event{t, i, 'u', {}};
      state.draw_views(i, t, event, p.h_views, nullptr);
      state.trace_.events.push_back(std::move(event));
      pending.push_back(std::move(p));
    }
    run_compute_phase(pending, cfg.stress_threads, [&](PendingUpdate& p) {
      p.h_new = model.update(g, p.node, p.layer, p.h_own, p.h_views).detached();
    });
    for (auto& p : pending) {
      SimNode& node = state.nodes_[p.node];
      node.h = p.h_new;
      node.layer++;
      state.publish(p.node, t + 1, node.h, {});
      state.trace_.updates++;
    }
  };

  auto finish = [&](bool final_pass) -> double {
    if (!final_pass) return model.residual(g, state.stack_state());
    std::vector<double> out_data;
    int out_cols = -1;
    for (int i = 0; i < g.n; ++i) {
      SimNode& node = state.nodes_[i];
      if (!node.has_out) {
        node.out = model.output(g, i, node.h).detached();
        node.has_out = true;
      }
      if (out_cols < 0) {
        out_cols = node.out.cols;
        out_data.reserve(static_cast<size_t>(g.n) * out_cols);
      }
      for (int c = 0; c < out_cols; ++c) out_data.push_back(node.out.at(c));
    }
    state.trace_.outputs = Tensor::from_data(g.n, out_cols, out_data);
    return 0.0;
  };

  return run_loop(state, budget, budget_bound, init, tick, finish);
}

AsyncTrace simulate_opt_impl(const OptAsyncModel& model, const Graph& g, const AsyncConfig& cfg) {
  if (cfg.alpha <= 0.0) throw UsageError("simulate: opt mode needs a positive step size");
  SimState state(g, cfg, model.width());
  long long budget = cfg.total_updates > 0
                         ? cfg.total_updates
                         : 400LL * g.n * (cfg.stagger + cfg.delay);
  const int k = model.width();

  auto init = [&]() {
    for (int i = 0; i < g.n; ++i) {
      SimNode& node = state.nodes_[i];
      node.h = Tensor::zeros(1, k);
      std::vector<Tensor> zero_views(g.adjacency[i].size(), Tensor::zeros(1, k));
      LocalGradients lg = model.gradients(g, i, node.h, zero_views);
      node.g_self = lg.own;
      node.g_out = lg.nbr;
      state.publish(i, 0, node.h, node.g_out);
    }
  };

  auto tick = [&](long long t) {
    std::vector<PendingUpdate> pending;
    for (int i = 0; i < g.n; ++i) {
      SimNode& node = state.nodes_[i];
      if (node.next_wake != t) continue;
      PendingUpdate p;
      p.node = i;
      p.h_own = node.h;
      AsyncEvent event{t, i, 'u', {}};
      state.draw_views(i, t, event, p.h_views, &p.g_views);
      state.trace_.events.push_back(std::move(event));
      pending.push_back(std::move(p));
    }
    run_compute_phase(pending, cfg.stress_threads, [&](PendingUpdate& p) {
      Tensor grad_sum = state.nodes_[p.node].g_self;
      for (const Tensor& gv : p.g_views) grad_sum = add(grad_sum, gv);
      p.h_new = sub(p.h_own, scalar_mul(grad_sum, cfg.alpha)).detached();
      p.lg = model.gradients(g, p.node, p.h_new, p.h_views);
    });
    for (auto& p : pending) {
      SimNode& node = state.nodes_[p.node];
      node.h = p.h_new;
      node.g_self = p.lg.own;
      node.g_out = p.lg.nbr;
      state.publish(p.node, t + 1, node.h, node.g_out);
      state.trace_.updates++;
    }
  };

  auto finish = [&](bool final_pass) -> double {
    if (!final_pass) return model.residual(g, state.stack_state());
    std::vector<double> out_data;
    int out_cols = -1;
    for (int i = 0; i < g.n; ++i) {
      Tensor out = model.output(g, i, state.nodes_[i].h).detached();
      if (out_cols < 0) {
        out_cols = out.cols;
        out_data.reserve(static_cast<size_t>(g.n) * out_cols);
      }
      for (int c = 0; c < out_cols; ++c) out_data.push_back(out.at(c));
    }
    state.trace_.outputs = Tensor::from_data(g.n, out_cols, out_data);
    return 0.0;
  };

  return run_loop(state, budget, /*budget_bound=*/true, init, tick, finish);
}

}  // namespace

AsyncTrace simulate(const FiniteAsyncModel& model, const Graph& g, const AsyncConfig& cfg) {
  return simulate_finite_impl(model, g, cfg);
}

AsyncTrace simulate(const OptAsyncModel& model, const Graph& g, const AsyncConfig& cfg) {
  return simulate_opt_impl(model, g, cfg);
}

// --- adapters ---------------------------------------------------------------

namespace {

class ExplicitAsync final : public FiniteAsyncModel {
 public:
  ExplicitAsync(const Model& m, const Graph& g)
      : cfg_(m.cfg),
        params_(bind_params(m.params, nullptr)),
        a_hat_(renormalized_adjacency(g)),
        ro_(readout_spec(m.cfg)) {}

  int width() const override { return embedding_dim(cfg_); }
  int layers() const override { return explicit_layers(cfg_); }

  Tensor initial_state(const Graph& g, int i) const override {
    return explicit_initial_state(params_, cfg_, g, i);
  }

  Tensor update(const Graph& g, int i, int layer, const Tensor& h_own,
                const std::vector<Tensor>& views) const override {
    if (cfg_.kind == ModelKind::Gcn) {
      return gcn_node_update(params_, cfg_, g, a_hat_, i, layer, h_own, views);
    }
    return gat_node_update(params_, cfg_, g, i, layer, h_own, views);
  }

  Tensor output(const Graph& g, int i, const Tensor& h) const override {
    (void)g;
    (void)i;
    return mlp_forward(params_, "readout", ro_, h);
  }

 private:
  ModelConfig cfg_;
  BoundParams params_;
  Tensor a_hat_;
  MlpSpec ro_;
};

class IgnnAsync final : public FiniteAsyncModel {
 public:
  IgnnAsync(const Model& m, const Graph& g)
      : cfg_(m.cfg),
        params_(bind_params(m.params, nullptr)),
        a_hat_(renormalized_adjacency(g)),
        ro_(readout_spec(m.cfg)) {
    Tensor gx = ignn_feature_term(params_, cfg_, g.x);
    gx_rows_.reserve(g.n);
    for (int i = 0; i < g.n; ++i) gx_rows_.push_back(slice_rows(gx, i, i + 1));
  }

  int width() const override { return cfg_.embed_dim; }
  int layers() const override { return -1; }

  Tensor initial_state(const Graph& g, int i) const override {
    (void)g;
    (void)i;
    return Tensor::zeros(1, cfg_.embed_dim);
  }

  Tensor update(const Graph& g, int i, int layer, const Tensor& h_own,
                const std::vector<Tensor>& views) const override {
    (void)layer;
    return ignn_node_update(params_, cfg_, g, a_hat_, i, h_own, views, gx_rows_[i]);
  }

  Tensor output(const Graph& g, int i, const Tensor& h) const override {
    (void)g;
    (void)i;
    return mlp_forward(params_, "readout", ro_, h);
  }

  double residual(const Graph& g, const Tensor& h) const override {
    return frobenius(sub(ignn_map(params_, cfg_, g, h), h));
  }

 private:
  ModelConfig cfg_;
  BoundParams params_;
  Tensor a_hat_;
  MlpSpec ro_;
  std::vector<Tensor> gx_rows_;
};

class EnergyAsync final : public OptAsyncModel {
 public:
  EnergyAsync(const Model& m, const Graph& g)
      : cfg_(m.cfg), params_(bind_params(m.params, nullptr)), ro_(readout_spec(m.cfg)) {
    energy_ = make_node_energy(params_, cfg_, g);
  }
  EnergyAsync(const EnergyAsync&) = delete;
  EnergyAsync& operator=(const EnergyAsync&) = delete;

  int width() const override { return cfg_.embed_dim; }

  LocalGradients gradients(const Graph& g, int i, const Tensor& h_own,
                           const std::vector<Tensor>& views) const override {
    return local_node_gradients(*energy_, g, i, h_own, views);
  }

  Tensor output(const Graph& g, int i, const Tensor& h) const override {
    (void)g;
    (void)i;
    return mlp_forward(params_, "readout", ro_, h);
  }

  double residual(const Graph& g, const Tensor& h) const override {
    return frobenius(energy_gradient(*energy_, g, h));
  }

 private:
  ModelConfig cfg_;
  BoundParams params_;
  MlpSpec ro_;
  std::unique_ptr<NodeEnergy> energy_;
};

}  // namespace

std::unique_ptr<FiniteAsyncModel> make_finite_async(const Model& m, const Graph& g) {
  switch (m.cfg.kind) {
    case ModelKind::Gcn:
    case ModelKind::Gat: return std::make_unique<ExplicitAsync>(m, g);
    case ModelKind::Ignn: return std::make_unique<IgnnAsync>(m, g);
    default: throw UsageError("make_finite_async: model runs in opt mode");
  }
}

std::unique_ptr<OptAsyncModel> make_opt_async(const Model& m, const Graph& g) {
  if (!uses_energy_descent(m.cfg.kind)) {
    throw UsageError("make_opt_async: model does not descend an energy");
  }
  return std::make_unique<EnergyAsync>(m, g);
}

// --- audit and export ---------------------------------------------------------

std::vector<AuditViolation> staleness_audit(const AsyncTrace& trace, int bound) {
  std::vector<AuditViolation> violations;
  if (trace.stagger > bound) {
    violations.push_back(
        {0, -1, "stagger " + std::to_string(trace.stagger) + " exceeds bound"});
  }
  std::map<int, long long> last_wake;
  for (const AsyncEvent& e : trace.events) {
    long long prev = last_wake.count(e.node) ? last_wake[e.node] : 0;
    if (e.t - prev > trace.stagger) {
      violations.push_back({e.t, e.node,
                            "wake gap " + std::to_string(e.t - prev) + " exceeds stagger " +
                                std::to_string(trace.stagger)});
    }
    last_wake[e.node] = e.t;
    for (const ViewStamp& v : e.views) {
      if (v.node == e.node) {
        if (v.tau != e.t) {
          violations.push_back({e.t, e.node, "self view is not fresh"});
        }
      } else {
        long long staleness = e.t - v.tau;
        if (staleness < 0 || staleness >= bound) {
          violations.push_back({e.t, e.node,
                                "view of node " + std::to_string(v.node) + " is " +
                                    std::to_string(staleness) + " old (bound " +
                                    std::to_string(bound) + ")"});
        }
      }
    }
  }
  return violations;
}

void export_trace_jsonl(const AsyncTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("export_trace_jsonl: cannot open " + path);
  for (const AsyncEvent& e : trace.events) {
    nlohmann::json doc;
    doc["t"] = e.t;
    doc["node"] = e.node;
    doc["kind"] = e.kind == 'r' ? "readout" : "update";
    nlohmann::json views = nlohmann::json::object();
    for (const ViewStamp& v : e.views) views[std::to_string(v.node)] = v.tau;
    doc["views"] = std::move(views);
    out << doc.dump() << '\n';
  }
  if (!out) throw UsageError("export_trace_jsonl: write failure on " + path);
}

}  // namespace hogwild
