#include "hogwild/models.hpp"

#include <cmath>

#include "hogwild/autodiff.hpp"
#include "hogwild/errors.hpp"

namespace hogwild {

namespace {

std::string head_prefix(const std::string& base, int h) {
  return base + ".h" + std::to_string(h);
}

Tensor row_slice(const Tensor& m, int i) { return slice_rows(m, i, i + 1); }

// Concatenate non-empty row blocks left to right.
Tensor cat_cols(const std::vector<Tensor>& parts) {
  Tensor out;
  for (const Tensor& t : parts) {
    if (t.empty()) continue;
    out = out.empty() ? t : concat_cols(out, t);
  }
  return out;
}

double inf_norm(const Tensor& t) {
  double norm = 0.0;
  for (int i = 0; i < t.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < t.cols; ++j) s += std::abs(t.at(i, j));
    norm = std::max(norm, s);
  }
  return norm;
}

// Sums a_hat-weighted rows in ascending node order with the node's own state
// merged at its sorted position. This reproduces matmul's accumulation order,
// so a per-node update is bit-identical to its row of the matrix form.
Tensor ordered_aggregate(const Tensor& a_hat, const Graph& g, int i, const Tensor& h_own,
                         const std::vector<Tensor>& views) {
  Neighborhood nb = neighbors(g, i);
  Tensor agg;
  auto push = [&](const Tensor& v, double coef) {
    Tensor term = scalar_mul(v, coef);
    agg = agg.empty() ? term : add(agg, term);
  };
  bool self_done = false;
  for (size_t idx = 0; idx < views.size(); ++idx) {
    if (!self_done && i < nb.ids[idx]) {
      push(h_own, a_hat.at(i, i));
      self_done = true;
    }
    push(views[idx], a_hat.at(i, nb.ids[idx]));
  }
  if (!self_done) push(h_own, a_hat.at(i, i));
  return agg;
}

}  // namespace

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "gcn") return ModelKind::Gcn;
  if (name == "gat") return ModelKind::Gat;
  if (name == "ignn") return ModelKind::Ignn;
  if (name == "gsd") return ModelKind::Gsd;
  if (name == "energy-node") return ModelKind::EnergyNode;
  if (name == "energy-edge") return ModelKind::EnergyEdge;
  if (name == "energy-attn") return ModelKind::EnergyAttn;
  throw ConfigError("unknown model '" + name +
                    "' (expected gcn|gat|ignn|gsd|energy-node|energy-edge|energy-attn)");
}

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Gcn: return "gcn";
    case ModelKind::Gat: return "gat";
    case ModelKind::Ignn: return "ignn";
    case ModelKind::Gsd: return "gsd";
    case ModelKind::EnergyNode: return "energy-node";
    case ModelKind::EnergyEdge: return "energy-edge";
    case ModelKind::EnergyAttn: return "energy-attn";
  }
  return "?";
}

bool is_implicit(ModelKind kind) { return kind != ModelKind::Gcn && kind != ModelKind::Gat; }

bool uses_energy_descent(ModelKind kind) { return is_implicit(kind) && kind != ModelKind::Ignn; }

int embedding_dim(const ModelConfig& cfg) {
  switch (cfg.kind) {
    case ModelKind::Gcn: return cfg.gcn_width;
    case ModelKind::Gat: return cfg.gat_heads * cfg.gat_head_dim;
    default: return cfg.embed_dim;
  }
}

int message_dim(const ModelConfig& cfg) {
  int per_head = cfg.msg_layers.back();
  return cfg.kind == ModelKind::EnergyAttn ? cfg.attn_heads * per_head : per_head;
}

int explicit_layers(const ModelConfig& cfg) {
  switch (cfg.kind) {
    case ModelKind::Gcn: return cfg.gcn_layers;
    case ModelKind::Gat: return cfg.gat_layers;
    default: return 0;
  }
}

MlpSpec readout_spec(const ModelConfig& cfg) {
  MlpSpec spec;
  spec.dims.push_back(embedding_dim(cfg));
  for (int d : cfg.readout_hidden) spec.dims.push_back(d);
  spec.dims.push_back(cfg.out_dim);
  return spec;
}

MlpSpec feature_map_spec(const ModelConfig& cfg) {
  MlpSpec spec;
  spec.dims.push_back(cfg.feat_dim);
  for (int d : cfg.feature_map_hidden) spec.dims.push_back(d);
  spec.dims.push_back(cfg.embed_dim);
  return spec;
}

PicnnSpec message_picnn_spec(const ModelConfig& cfg) {
  PicnnSpec spec;
  spec.layers = cfg.msg_layers;
  if (cfg.kind == ModelKind::EnergyNode) {
    spec.x_dim = cfg.feat_dim;
    spec.y_mono_dim = cfg.embed_dim;
  } else {
    spec.x_dim = 2 * cfg.feat_dim + cfg.edge_feat_dim;
    spec.y_mono_dim = 2 * cfg.embed_dim;
  }
  spec.y_free_dim = 0;
  return spec;
}

PicnnSpec update_picnn_spec(const ModelConfig& cfg) {
  PicnnSpec spec;
  spec.layers = cfg.upd_layers;
  spec.x_dim = cfg.feat_dim;
  // The update must be nondecreasing in the aggregated message for the
  // composed energy to stay convex (messages are convex, not affine, in the
  // embeddings). Its direct embedding argument needs convexity only.
  spec.y_mono_dim = message_dim(cfg);
  spec.y_free_dim = cfg.embed_dim;
  return spec;
}

AttnSpec attention_spec(const ModelConfig& cfg) {
  AttnSpec spec;
  spec.heads = cfg.attn_heads;
  spec.q = cfg.attn_q;
  spec.s = cfg.attn_s;
  spec.p = cfg.feat_dim;
  spec.r = cfg.edge_feat_dim;
  spec.leaky_slope = cfg.leaky_slope;
  return spec;
}

Model make_model(const ModelConfig& cfg, uint64_t seed) {
  if (cfg.feat_dim < 1) throw ConfigError("make_model: feature width must be positive");
  if (cfg.out_dim < 1) throw ConfigError("make_model: output width must be positive");
  Model m;
  m.cfg = cfg;
  Rng rng(seed);
  switch (cfg.kind) {
    case ModelKind::Gcn: {
      for (int l = 0; l < cfg.gcn_layers; ++l) {
        int in = l == 0 ? cfg.feat_dim : cfg.gcn_width;
        m.params.add("gcn.W" + std::to_string(l), init_uniform(rng, cfg.gcn_width, in, in));
      }
      break;
    }
    case ModelKind::Gat: {
      for (int l = 0; l < cfg.gat_layers; ++l) {
        int in = l == 0 ? cfg.feat_dim : cfg.gat_heads * cfg.gat_head_dim;
        for (int h = 0; h < cfg.gat_heads; ++h) {
          std::string hp = head_prefix("gat.l" + std::to_string(l), h);
          m.params.add(hp + ".m", init_uniform(rng, cfg.gat_head_dim, in, in));
          m.params.add(hp + ".a", init_uniform(rng, 1, 2 * cfg.gat_head_dim, 2 * cfg.gat_head_dim));
        }
      }
      break;
    }
    case ModelKind::Ignn: {
      m.params.add("ignn.theta",
                   init_uniform(rng, cfg.embed_dim, cfg.embed_dim, cfg.embed_dim),
                   Constraint{ConstraintKind::InfNormBound, 1.0 - cfg.contraction_margin});
      add_mlp_params(m.params, "gmap", feature_map_spec(cfg), rng);
      break;
    }
    case ModelKind::Gsd: {
      add_mlp_params(m.params, "gmap", feature_map_spec(cfg), rng);
      break;
    }
    case ModelKind::EnergyNode:
    case ModelKind::EnergyEdge: {
      add_picnn_params(m.params, "msg", message_picnn_spec(cfg), rng);
      add_picnn_params(m.params, "self", message_picnn_spec(cfg), rng);
      add_picnn_params(m.params, "upd", update_picnn_spec(cfg), rng);
      break;
    }
    case ModelKind::EnergyAttn: {
      for (int h = 0; h < cfg.attn_heads; ++h) {
        add_picnn_params(m.params, head_prefix("msg", h), message_picnn_spec(cfg), rng);
        add_picnn_params(m.params, head_prefix("self", h), message_picnn_spec(cfg), rng);
      }
      add_attention_params(m.params, "attn", attention_spec(cfg), rng);
      add_picnn_params(m.params, "upd", update_picnn_spec(cfg), rng);
      break;
    }
  }
  add_mlp_params(m.params, "readout", readout_spec(cfg), rng);
  project_constraints(m.params);
  return m;
}

Tensor readout(const BoundParams& p, const ModelConfig& cfg, const Tensor& h) {
  return mlp_forward(p, "readout", readout_spec(cfg), h);
}

// --- explicit stacks --------------------------------------------------------

namespace {

void check_layer_index(const ModelConfig& cfg, int l, const char* who) {
  if (l < 0 || l >= explicit_layers(cfg)) {
    throw UsageError(std::string(who) + ": layer index " + std::to_string(l) + " out of range");
  }
}

// Attention per head over projected rows; proj[idx] aligns with nb.ids,
// proj_own is the querying node's projection. Returns the aggregated message
// (1 x head_dim), pre-activation.
Tensor gat_head_message(const BoundParams& p, const ModelConfig& cfg, const std::string& hp,
                        const Tensor& proj_own, const std::vector<Tensor>& proj) {
  if (proj.empty()) return Tensor::zeros(1, cfg.gat_head_dim);
  const Tensor& a = p.at(hp + ".a");
  Tensor logits;
  for (size_t idx = 0; idx < proj.size(); ++idx) {
    Tensor cat = concat_cols(proj_own, proj[idx]);
    Tensor score = leaky_relu(matmul(cat, transpose(a)), cfg.leaky_slope);
    logits = idx == 0 ? score : concat_cols(logits, score);
  }
  Tensor alpha = softmax_row(logits);
  Tensor msg;
  for (size_t idx = 0; idx < proj.size(); ++idx) {
    Tensor term = mul(proj[idx], slice_cols(alpha, static_cast<int>(idx), static_cast<int>(idx) + 1));
    msg = idx == 0 ? term : add(msg, term);
  }
  return msg;
}

}  // namespace

Tensor gcn_layer(const BoundParams& p, const ModelConfig& cfg, int l, const Graph& g,
                 const Tensor& h) {
  check_layer_index(cfg, l, "gcn_layer");
  const Tensor& w = p.at("gcn.W" + std::to_string(l));
  if (h.cols != w.cols) {
    throw ShapeError("gcn_layer: embeddings width " + std::to_string(h.cols) +
                     " does not match layer " + std::to_string(l));
  }
  Tensor a_hat = renormalized_adjacency(g);
  // layer 0 projects features before aggregating, matching the stamp-0
  // published packets; deeper layers aggregate raw states first
  if (l == 0) return relu(matmul(a_hat, matmul(h, transpose(w))));
  return relu(matmul(matmul(a_hat, h), transpose(w)));
}

Tensor gat_layer(const BoundParams& p, const ModelConfig& cfg, int l, const Graph& g,
                 const Tensor& h) {
  check_layer_index(cfg, l, "gat_layer");
  std::string lp = "gat.l" + std::to_string(l);
  Tensor out;
  for (int i = 0; i < g.n; ++i) {
    Neighborhood nb = neighbors(g, i);
    Tensor row;
    for (int head = 0; head < cfg.gat_heads; ++head) {
      std::string hp = head_prefix(lp, head);
      const Tensor& w = p.at(hp + ".m");
      Tensor proj_own = matmul(row_slice(h, i), transpose(w));
      std::vector<Tensor> proj;
      proj.reserve(nb.ids.size());
      for (int j : nb.ids) proj.push_back(matmul(row_slice(h, j), transpose(w)));
      Tensor msg = gat_head_message(p, cfg, hp, proj_own, proj);
      row = head == 0 ? msg : concat_cols(row, msg);
    }
    row = relu(row);
    out = i == 0 ? row : concat_rows(out, row);
  }
  return out;
}

Tensor explicit_forward(const BoundParams& p, const ModelConfig& cfg, const Graph& g) {
  Tensor h = g.x;
  for (int l = 0; l < explicit_layers(cfg); ++l) {
    h = cfg.kind == ModelKind::Gcn ? gcn_layer(p, cfg, l, g, h) : gat_layer(p, cfg, l, g, h);
  }
  return h;
}

Tensor explicit_initial_state(const BoundParams& p, const ModelConfig& cfg, const Graph& g,
                              int i) {
  Tensor x = feature_row(g, i);
  if (cfg.kind == ModelKind::Gcn) {
    return matmul(x, transpose(p.at("gcn.W0")));
  }
  if (cfg.kind == ModelKind::Gat) {
    Tensor row;
    for (int head = 0; head < cfg.gat_heads; ++head) {
      Tensor proj = matmul(x, transpose(p.at(head_prefix("gat.l0", head) + ".m")));
      row = head == 0 ? proj : concat_cols(row, proj);
    }
    return row;
  }
  throw UsageError("explicit_initial_state: not an explicit model");
}

Tensor gcn_node_update(const BoundParams& p, const ModelConfig& cfg, const Graph& g,
                       const Tensor& a_hat, int i, int layer, const Tensor& h_own,
                       const std::vector<Tensor>& views) {
  check_layer_index(cfg, layer, "gcn_node_update");
  Neighborhood nb = neighbors(g, i);
  if (views.size() != nb.ids.size()) {
    throw UsageError("gcn_node_update: views do not align with the neighbor list");
  }
  // Published state is already W0-projected, so layer 0 aggregates only.
  Tensor agg = ordered_aggregate(a_hat, g, i, h_own, views);
  if (layer == 0) return relu(agg);
  return relu(matmul(agg, transpose(p.at("gcn.W" + std::to_string(layer)))));
}

Tensor gat_node_update(const BoundParams& p, const ModelConfig& cfg, const Graph& g, int i,
                       int layer, const Tensor& h_own, const std::vector<Tensor>& views) {
  check_layer_index(cfg, layer, "gat_node_update");
  Neighborhood nb = neighbors(g, i);
  if (views.size() != nb.ids.size()) {
    throw UsageError("gat_node_update: views do not align with the neighbor list");
  }
  std::string lp = "gat.l" + std::to_string(layer);
  Tensor row;
  for (int head = 0; head < cfg.gat_heads; ++head) {
    std::string hp = head_prefix(lp, head);
    Tensor proj_own;
    std::vector<Tensor> proj;
    proj.reserve(views.size());
    if (layer == 0) {
      // Stamp-0 state is the per-head projection, concatenated; slice it out.
      int c0 = head * cfg.gat_head_dim;
      proj_own = slice_cols(h_own, c0, c0 + cfg.gat_head_dim);
      for (const Tensor& v : views) proj.push_back(slice_cols(v, c0, c0 + cfg.gat_head_dim));
    } else {
      const Tensor& w = p.at(hp + ".m");
      proj_own = matmul(h_own, transpose(w));
      for (const Tensor& v : views) proj.push_back(matmul(v, transpose(w)));
    }
    Tensor msg = gat_head_message(p, cfg, hp, proj_own, proj);
    row = head == 0 ? msg : concat_cols(row, msg);
  }
  return relu(row);
}

// --- IGNN -------------------------------------------------------------------

namespace {

void check_ignn_constraint(const BoundParams& p, const ModelConfig& cfg) {
  double norm = inf_norm(p.at("ignn.theta"));
  if (norm > 1.0 - cfg.contraction_margin + 1e-12) {
    throw UsageError("ignn: weight inf-norm " + std::to_string(norm) +
                     " violates the contraction bound");
  }
}

}  // namespace

Tensor ignn_feature_term(const BoundParams& p, const ModelConfig& cfg, const Tensor& x) {
  return mlp_forward(p, "gmap", feature_map_spec(cfg), x);
}

Tensor ignn_map(const BoundParams& p, const ModelConfig& cfg, const Graph& g, const Tensor& h) {
  check_ignn_constraint(p, cfg);
  if (h.rows != g.n || h.cols != cfg.embed_dim) {
    throw ShapeError("ignn_map: embeddings must be n x k, got " + h.shape_str());
  }
  Tensor a_hat = renormalized_adjacency(g);
  Tensor m = matmul(matmul(a_hat, h), transpose(p.at("ignn.theta")));
  return relu(add(m, ignn_feature_term(p, cfg, g.x)));
}

Tensor ignn_node_update(const BoundParams& p, const ModelConfig& cfg, const Graph& g,
                        const Tensor& a_hat, int i, const Tensor& h_own,
                        const std::vector<Tensor>& views, const Tensor& gx_row) {
  check_ignn_constraint(p, cfg);
  Neighborhood nb = neighbors(g, i);
  if (views.size() != nb.ids.size()) {
    throw UsageError("ignn_node_update: views do not align with the neighbor list");
  }
  Tensor agg = ordered_aggregate(a_hat, g, i, h_own, views);
  return relu(add(matmul(agg, transpose(p.at("ignn.theta"))), gx_row));
}

// --- energy models ----------------------------------------------------------

namespace {

class GsdEnergy final : public NodeEnergy {
 public:
  GsdEnergy(const BoundParams& p, const ModelConfig& cfg, const Graph& g)
      : cfg_(cfg), lap_(renormalized_laplacian(g)) {
    c_ = mlp_forward(p, "gmap", feature_map_spec(cfg), g.x);
  }

  int dim() const override { return cfg_.embed_dim; }

  Tensor node_energy(const Graph& g, int i, const Tensor& h_i,
                     const std::vector<Tensor>& nbr_h) const override {
    Neighborhood nb = neighbors(g, i);
    if (nbr_h.size() != nb.ids.size()) {
      throw UsageError("node_energy: views do not align with the neighbor list");
    }
    Tensor fit = sum_all(square(sub(h_i, row_slice(c_, i))));
    Tensor smooth = scalar_mul(sum_all(mul(h_i, h_i)), lap_.at(i, i));
    for (size_t idx = 0; idx < nbr_h.size(); ++idx) {
      smooth =
          add(smooth, scalar_mul(sum_all(mul(h_i, nbr_h[idx])), lap_.at(i, nb.ids[idx])));
    }
    return add(scalar_mul(fit, cfg_.gsd_gamma), scalar_mul(smooth, cfg_.gsd_beta));
  }

 private:
  ModelConfig cfg_;
  Tensor lap_;
  Tensor c_;
};

class ConvexEnergy final : public NodeEnergy {
 public:
  ConvexEnergy(const BoundParams& p, const ModelConfig& cfg, const Graph& g)
      : p_(p), cfg_(cfg), msg_spec_(message_picnn_spec(cfg)), upd_spec_(update_picnn_spec(cfg)) {
    // models with r = 0 never read edge features, so extra graph columns are fine
    if (cfg.edge_feat_dim > 0 && g.edge_feat_dim() != cfg.edge_feat_dim) {
      throw ConfigError("energy model expects edge feature width " +
                        std::to_string(cfg.edge_feat_dim) + ", graph has " +
                        std::to_string(g.edge_feat_dim()));
    }
    if (cfg.kind == ModelKind::EnergyAttn) {
      AttnSpec spec = attention_spec(cfg);
      alpha_.reserve(g.n);
      for (int i = 0; i < g.n; ++i) alpha_.push_back(attention_weights(p, "attn", spec, g, i));
    }
  }

  int dim() const override { return cfg_.embed_dim; }

  Tensor node_energy(const Graph& g, int i, const Tensor& h_i,
                     const std::vector<Tensor>& nbr_h) const override {
    Neighborhood nb = neighbors(g, i);
    if (nbr_h.size() != nb.ids.size()) {
      throw UsageError("node_energy: views do not align with the neighbor list");
    }
    Tensor x_i = feature_row(g, i);
    Tensor m;
    if (cfg_.kind == ModelKind::EnergyAttn) {
      for (int head = 0; head < cfg_.attn_heads; ++head) {
        Tensor agg = head_message(g, i, head, h_i, nbr_h, x_i, nb);
        m = head == 0 ? agg : concat_cols(m, agg);
      }
    } else {
      m = head_message(g, i, -1, h_i, nbr_h, x_i, nb);
    }
    Tensor e = picnn_forward(p_, "upd", upd_spec_, x_i, m, h_i);
    return add(e, scalar_mul(sum_all(square(h_i)), 0.5 * cfg_.energy_beta));
  }

 private:
  // head < 0: the single non-attention message network.
  Tensor head_message(const Graph& g, int i, int head, const Tensor& h_i,
                      const std::vector<Tensor>& nbr_h, const Tensor& x_i,
                      const Neighborhood& nb) const {
    std::string msg_prefix = head < 0 ? "msg" : head_prefix("msg", head);
    std::string self_prefix = head < 0 ? "self" : head_prefix("self", head);
    bool node_wise = cfg_.kind == ModelKind::EnergyNode;
    Tensor agg = Tensor::zeros(1, cfg_.msg_layers.back());
    for (size_t idx = 0; idx < nbr_h.size(); ++idx) {
      int j = nb.ids[idx];
      Tensor term;
      if (node_wise) {
        term = picnn_forward(p_, msg_prefix, msg_spec_, feature_row(g, j), nbr_h[idx], Tensor());
      } else {
        Tensor e = cfg_.edge_feat_dim > 0 ? edge_feature(g, i, j) : Tensor::zeros(1, 0);
        Tensor x = cat_cols({x_i, feature_row(g, j), e});
        term = picnn_forward(p_, msg_prefix, msg_spec_, x, concat_cols(h_i, nbr_h[idx]), Tensor());
      }
      if (head >= 0) {
        Tensor a = slice_cols(slice_rows(alpha_[i], head, head + 1), static_cast<int>(idx),
                              static_cast<int>(idx) + 1);
        term = mul(term, a);
      }
      agg = add(agg, term);
    }
    Tensor self_term;
    if (node_wise) {
      self_term = picnn_forward(p_, self_prefix, msg_spec_, x_i, h_i, Tensor());
    } else {
      Tensor x = cat_cols({x_i, x_i, Tensor::zeros(1, cfg_.edge_feat_dim)});
      self_term = picnn_forward(p_, self_prefix, msg_spec_, x, concat_cols(h_i, h_i), Tensor());
    }
    return add(agg, self_term);
  }

  const BoundParams& p_;
  ModelConfig cfg_;
  PicnnSpec msg_spec_;
  PicnnSpec upd_spec_;
  std::vector<Tensor> alpha_;
};

}  // namespace

std::unique_ptr<NodeEnergy> make_node_energy(const BoundParams& p, const ModelConfig& cfg,
                                             const Graph& g) {
  switch (cfg.kind) {
    case ModelKind::Gsd: return std::make_unique<GsdEnergy>(p, cfg, g);
    case ModelKind::EnergyNode:
    case ModelKind::EnergyEdge:
    case ModelKind::EnergyAttn: return std::make_unique<ConvexEnergy>(p, cfg, g);
    default: throw UsageError("make_node_energy: model has no energy");
  }
}

Tensor total_energy(const NodeEnergy& e, const Graph& g, const Tensor& h) {
  if (h.rows != g.n || h.cols != e.dim()) {
    throw ShapeError("total_energy: embeddings must be n x k, got " + h.shape_str());
  }
  Tensor total;
  for (int i = 0; i < g.n; ++i) {
    Neighborhood nb = neighbors(g, i);
    std::vector<Tensor> nbr_h;
    nbr_h.reserve(nb.ids.size());
    for (int j : nb.ids) nbr_h.push_back(row_slice(h, j));
    Tensor e_i = e.node_energy(g, i, row_slice(h, i), nbr_h);
    total = i == 0 ? e_i : add(total, e_i);
  }
  return total;
}

LocalGradients local_node_gradients(const NodeEnergy& e, const Graph& g, int i, const Tensor& h_i,
                                    const std::vector<Tensor>& nbr_h) {
  Tape tape;
  Tensor own = tape.track(h_i.detached());
  std::vector<Tensor> nbrs;
  nbrs.reserve(nbr_h.size());
  for (const Tensor& v : nbr_h) nbrs.push_back(tape.track(v.detached()));
  Tensor e_i = e.node_energy(g, i, own, nbrs);
  Gradients grads = tape.backward(e_i);
  LocalGradients out;
  out.node = i;
  out.value = e_i.scalar();
  out.own = grads.grad(own).detached();
  out.nbr.reserve(nbrs.size());
  for (const Tensor& v : nbrs) out.nbr.push_back(grads.grad(v).detached());
  return out;
}

double model_energy(const Model& m, const Graph& g, const Tensor& h) {
  BoundParams p = bind_params(m.params, nullptr);
  auto e = make_node_energy(p, m.cfg, g);
  return total_energy(*e, g, h).scalar();
}

LocalGradients node_energy_gradients(const Model& m, const Graph& g, const Tensor& h, int i) {
  if (i < 0 || i >= g.n) throw UsageError("node_energy_gradients: node out of range");
  BoundParams p = bind_params(m.params, nullptr);
  auto e = make_node_energy(p, m.cfg, g);
  Neighborhood nb = neighbors(g, i);
  std::vector<Tensor> nbr_h;
  nbr_h.reserve(nb.ids.size());
  for (int j : nb.ids) nbr_h.push_back(slice_rows(h, j, j + 1));
  return local_node_gradients(*e, g, i, slice_rows(h, i, i + 1), nbr_h);
}

}  // namespace hogwild
