#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "hogwild/graph.hpp"
#include "hogwild/models.hpp"

namespace hogwild {

// Discrete-event model of partially asynchronous, fully local inference.
// Time advances in integer ticks. Every node wakes at most once per tick;
// wake gaps are Uniform(1, S) (inclusive). On a wake at time t the node
// redraws, per neighbor j, a view timestamp tau_j = t - Uniform(0,
// min(t - tau_j, D)), reads neighbor j's packet published at the latest stamp
// <= tau_j, and updates from those stale views plus its own current state
// (tau_i = t). A value updated at tick t becomes readable at stamp t+1.
// Staleness never exceeds B = S + D.
struct AsyncConfig {
  int stagger = 4;  // S >= 1
  int delay = 3;    // D >= 0
  // Opt/fixed-point-mode update budget; <= 0 selects 400 * n * (S + D).
  long long total_updates = 0;
  uint64_t seed = 0;
  double alpha = 0.0;           // opt-mode step size
  bool stress_threads = false;  // run each tick's updates on real threads
  int residual_every = 0;       // god-view residual cadence in ticks; 0 = off
};

struct ViewStamp {
  int node = -1;   // view owner (neighbor or self)
  long long tau = 0;
};

struct AsyncEvent {
  long long t = 0;
  int node = -1;
  char kind = 'u';  // 'u' update, 'r' readout
  std::vector<ViewStamp> views;
};

struct AsyncTrace {
  int stagger = 0;
  int delay = 0;
  std::vector<AsyncEvent> events;
  Tensor final_h;   // n x width, state when the run ended
  Tensor outputs;   // n x J readout outputs
  std::vector<double> residual_curve;
  long long updates = 0;
  long long ticks = 0;
};

// Layered / fixed-point node program: publishes plain embeddings.
class FiniteAsyncModel {
 public:
  virtual ~FiniteAsyncModel() = default;
  virtual int width() const = 0;
  // Number of updates before readout; < 0 runs until the update budget.
  virtual int layers() const = 0;
  virtual Tensor initial_state(const Graph& g, int i) const = 0;
  virtual Tensor update(const Graph& g, int i, int layer, const Tensor& h_own,
                        const std::vector<Tensor>& views) const = 0;
  virtual Tensor output(const Graph& g, int i, const Tensor& h) const = 0;
  // God-view diagnostic; NaN disables the residual curve.
  virtual double residual(const Graph& g, const Tensor& h) const {
    (void)g;
    (void)h;
    return std::numeric_limits<double>::quiet_NaN();
  }
};

// Descent node program: packets carry (h_j, g_{ji}), fixed size 2k. A node
// sums its cached self-gradient with the received neighbor gradients, steps,
// then recomputes its outgoing gradients from the same stale views.
class OptAsyncModel {
 public:
  virtual ~OptAsyncModel() = default;
  virtual int width() const = 0;
  virtual LocalGradients gradients(const Graph& g, int i, const Tensor& h_own,
                                   const std::vector<Tensor>& views) const = 0;
  virtual Tensor output(const Graph& g, int i, const Tensor& h) const = 0;
  virtual double residual(const Graph& g, const Tensor& h) const {
    (void)g;
    (void)h;
    return std::numeric_limits<double>::quiet_NaN();
  }
};

AsyncTrace simulate(const FiniteAsyncModel& model, const Graph& g, const AsyncConfig& cfg);
AsyncTrace simulate(const OptAsyncModel& model, const Graph& g, const AsyncConfig& cfg);

// Adapters onto the architectures. Bound per (model, graph); keep the graph
// alive while simulating.
std::unique_ptr<FiniteAsyncModel> make_finite_async(const Model& m, const Graph& g);
std::unique_ptr<OptAsyncModel> make_opt_async(const Model& m, const Graph& g);

struct AuditViolation {
  long long t = 0;
  int node = -1;
  std::string what;
};

// Independently re-checks a trace against the staleness assumptions: wake
// gaps <= S (taking S from the trace), view staleness t - tau < B, exact
// self-views. Returns every violation found.
std::vector<AuditViolation> staleness_audit(const AsyncTrace& trace, int bound);

// One JSON object per line: {"t", "node", "kind", "views": {id: tau}}.
void export_trace_jsonl(const AsyncTrace& trace, const std::string& path);

}  // namespace hogwild
