#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hogwild/graph.hpp"
#include "hogwild/nn.hpp"

namespace hogwild {

// Seven architectures behind one configuration type. GCN and GAT are
// fixed-depth feed-forward stacks; IGNN iterates a contractive map to a fixed
// point; the graph-signal-denoising model and the three convex-energy
// variants define their embeddings as the minimizer of a strongly convex
// energy.
enum class ModelKind { Gcn, Gat, Ignn, Gsd, EnergyNode, EnergyEdge, EnergyAttn };

ModelKind model_kind_from_string(const std::string& name);
const char* model_kind_name(ModelKind kind);
// Embeddings defined by a fixed point / minimizer rather than a forward stack.
bool is_implicit(ModelKind kind);
// Embeddings defined as an energy minimizer (everything implicit except IGNN).
bool uses_energy_descent(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::EnergyEdge;
  int feat_dim = 1;       // p
  int edge_feat_dim = 0;  // r
  int out_dim = 1;        // J
  int embed_dim = 2;      // k, implicit models

  int gcn_width = 10;
  int gcn_layers = 5;
  int gat_head_dim = 3;
  int gat_heads = 3;
  int gat_layers = 5;
  double leaky_slope = 0.2;

  // IGNN: ||theta_m||_inf <= 1 - margin keeps the update a contraction (the
  // renormalized adjacency has unit spectral radius on every graph).
  double contraction_margin = 0.05;

  double gsd_gamma = 1.0;
  double gsd_beta = 5.0;

  double energy_beta = 0.04;
  int attn_heads = 2;
  int attn_q = 4;
  int attn_s = 2;
  std::vector<int> msg_layers{4, 4, 2};
  std::vector<int> upd_layers{4, 4, 1};
  std::vector<int> feature_map_hidden{16, 16, 16};
  std::vector<int> readout_hidden{4, 4};
};

struct Model {
  ModelConfig cfg;
  ParamSet params;
};

// Initializes parameters (uniform +-1/sqrt(fan_in)) and projects constraints.
Model make_model(const ModelConfig& cfg, uint64_t seed);

// Width of published/converged embeddings (readout input).
int embedding_dim(const ModelConfig& cfg);
// Width of the aggregated message entering the update network.
int message_dim(const ModelConfig& cfg);
int explicit_layers(const ModelConfig& cfg);

MlpSpec readout_spec(const ModelConfig& cfg);
MlpSpec feature_map_spec(const ModelConfig& cfg);
PicnnSpec message_picnn_spec(const ModelConfig& cfg);
PicnnSpec update_picnn_spec(const ModelConfig& cfg);
AttnSpec attention_spec(const ModelConfig& cfg);

// Row-wise prediction head (n x k) -> (n x J). Classification logits stay
// raw; any squashing happens in the loss.
Tensor readout(const BoundParams& p, const ModelConfig& cfg, const Tensor& h);

// --- explicit stacks ------------------------------------------------------

// One propagation step; layer index in [0, layers). Information moves at most
// one hop per call.
Tensor gcn_layer(const BoundParams& p, const ModelConfig& cfg, int l, const Graph& g,
                 const Tensor& h);
Tensor gat_layer(const BoundParams& p, const ModelConfig& cfg, int l, const Graph& g,
                 const Tensor& h);
// All layers from the raw features.
Tensor explicit_forward(const BoundParams& p, const ModelConfig& cfg, const Graph& g);

// Per-node update forms used by the asynchronous runtime. Published node
// state is always embedding-width: at stamp 0 a node publishes its features
// projected through the first layer's weights, so later-layer readers never
// see a width change. `views` aligns with neighbors(g, i).
Tensor explicit_initial_state(const BoundParams& p, const ModelConfig& cfg, const Graph& g, int i);
// `a_hat` is the precomputed renormalized adjacency (callers cache it across
// updates).
Tensor gcn_node_update(const BoundParams& p, const ModelConfig& cfg, const Graph& g,
                       const Tensor& a_hat, int i, int layer, const Tensor& h_own,
                       const std::vector<Tensor>& views);
Tensor gat_node_update(const BoundParams& p, const ModelConfig& cfg, const Graph& g, int i,
                       int layer, const Tensor& h_own, const std::vector<Tensor>& views);

// --- IGNN -----------------------------------------------------------------

// One application of the contractive map relu(A_hat * H * theta^T + g(X)).
// Throws if the weight constraint is not satisfied.
Tensor ignn_map(const BoundParams& p, const ModelConfig& cfg, const Graph& g, const Tensor& h);
Tensor ignn_feature_term(const BoundParams& p, const ModelConfig& cfg, const Tensor& x);
// Per-node form: relu((sum_j A_hat_ij v_j + A_hat_ii h_own) theta^T + gx_i).
Tensor ignn_node_update(const BoundParams& p, const ModelConfig& cfg, const Graph& g,
                        const Tensor& a_hat, int i, const Tensor& h_own,
                        const std::vector<Tensor>& views, const Tensor& gx_row);

// --- energy models ----------------------------------------------------------

// Per-node energy term e_i(h_i, {h_j : j in N(i)}); the graph energy is the
// sum over nodes. Implementations touch 1-hop state only.
class NodeEnergy {
 public:
  virtual ~NodeEnergy() = default;
  virtual int dim() const = 0;
  virtual Tensor node_energy(const Graph& g, int i, const Tensor& h_i,
                             const std::vector<Tensor>& nbr_h) const = 0;
};

// Bound-parameter evaluator for the GSD or energy variants; holds per-graph
// precomputations (feature map output, attention weights), so construct one
// per (binding, graph). ConfigError if the graph's edge feature width does
// not match the model's.
std::unique_ptr<NodeEnergy> make_node_energy(const BoundParams& p, const ModelConfig& cfg,
                                             const Graph& g);

// Sum of per-node energies; rows of `h` may be tracked.
Tensor total_energy(const NodeEnergy& e, const Graph& g, const Tensor& h);

struct LocalGradients {
  int node = -1;
  double value = 0.0;          // e_i
  Tensor own;                  // de_i/dh_i (1 x k)
  std::vector<Tensor> nbr;     // de_i/dh_j, aligned with neighbors(g, i)
};

// Gradients of e_i with respect to the supplied (possibly stale) embedding
// rows, computed on a private tape. The evaluator must have been built from a
// tape-free binding: its cached tensors would otherwise belong to a foreign
// tape.
LocalGradients local_node_gradients(const NodeEnergy& e, const Graph& g, int i, const Tensor& h_i,
                                    const std::vector<Tensor>& nbr_h);

// Convenience forms over full embedding matrices (fresh views).
double model_energy(const Model& m, const Graph& g, const Tensor& h);
LocalGradients node_energy_gradients(const Model& m, const Graph& g, const Tensor& h, int i);

}  // namespace hogwild
