#include "hogwild/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hogwild/errors.hpp"

namespace hogwild {

namespace {

using nlohmann::json;

Tensor apply_activation(Activation act, const Tensor& t) {
  switch (act) {
    case Activation::Relu: return relu(t);
    case Activation::Tanh: return tanh_t(t);
    case Activation::Softplus: return softplus(t);
    case Activation::Identity: return t;
  }
  throw UsageError("apply_activation: unknown activation");
}

Tensor row_of(const Tensor& m, int i) {
  std::vector<double> row(m.cols);
  for (int c = 0; c < m.cols; ++c) row[c] = m.at(i, c);
  return Tensor::from_data(1, m.cols, row);
}

}  // namespace

void ParamSet::add(const std::string& name, Tensor value, Constraint c) {
  if (items.count(name)) throw UsageError("ParamSet::add: duplicate parameter " + name);
  items.emplace(name, Param{std::move(value), c});
}

const Tensor& ParamSet::value(const std::string& name) const {
  auto it = items.find(name);
  if (it == items.end()) throw UsageError("ParamSet::value: unknown parameter " + name);
  return it->second.value;
}

void ParamSet::set_value(const std::string& name, Tensor value) {
  auto it = items.find(name);
  if (it == items.end()) throw UsageError("ParamSet::set_value: unknown parameter " + name);
  if (!value.same_shape(it->second.value)) {
    throw UsageError("ParamSet::set_value: shape mismatch for " + name + ": " +
                     value.shape_str() + " vs " + it->second.value.shape_str());
  }
  it->second.value = std::move(value);
}

void project_constraints(ParamSet& params) {
  for (auto& [name, param] : params.items) {
    const Constraint& c = param.constraint;
    if (c.kind == ConstraintKind::None) continue;
    const Tensor& t = param.value;
    if (c.kind == ConstraintKind::NonNeg) {
      bool dirty = false;
      for (int i = 0; i < t.size(); ++i) {
        if (t.at(i) < 0.0) { dirty = true; break; }
      }
      if (!dirty) continue;
      std::vector<double> v(t.values());
      for (double& x : v) x = std::max(x, 0.0);
      param.value = Tensor::from_data(t.rows, t.cols, v);
    } else if (c.kind == ConstraintKind::InfNormBound) {
      double norm = 0.0;
      for (int i = 0; i < t.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < t.cols; ++j) s += std::abs(t.at(i, j));
        norm = std::max(norm, s);
      }
      if (norm <= c.bound || norm == 0.0) continue;
      double scale = c.bound / norm;
      std::vector<double> v(t.values());
      for (double& x : v) x *= scale;
      param.value = Tensor::from_data(t.rows, t.cols, v);
    }
  }
}

void save_checkpoint(const ParamSet& params, const std::string& path) {
  json doc = json::object();
  for (const auto& [name, param] : params.items) {
    const Tensor& t = param.value;
    json entry;
    entry["shape"] = json::array({t.rows, t.cols});
    json data = json::array();
    for (int i = 0; i < t.size(); ++i) data.push_back(t.at(i));
    entry["data"] = std::move(data);
    doc[name] = std::move(entry);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("save_checkpoint: cannot open " + path);
  out << doc.dump() << '\n';
  if (!out) throw UsageError("save_checkpoint: write failure on " + path);
}

std::map<std::string, Tensor> load_checkpoint_values(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  json doc;
  try {
    doc = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("load_checkpoint: parse failure: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("load_checkpoint: top level must be an object");
  std::map<std::string, Tensor> values;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const json& entry = it.value();
    if (!entry.is_object() || !entry.contains("shape") || !entry.contains("data")) {
      throw ConfigError("load_checkpoint: malformed entry for " + it.key());
    }
    const json& shape = entry["shape"];
    if (!shape.is_array() || shape.size() != 2) {
      throw ConfigError("load_checkpoint: bad shape for " + it.key());
    }
    int r = shape[0].get<int>();
    int c = shape[1].get<int>();
    std::vector<double> data;
    data.reserve(entry["data"].size());
    for (const auto& v : entry["data"]) {
      if (!v.is_number()) throw ConfigError("load_checkpoint: non-numeric data in " + it.key());
      data.push_back(v.get<double>());
    }
    if (static_cast<int>(data.size()) != r * c) {
      throw ConfigError("load_checkpoint: data length mismatch for " + it.key());
    }
    values.emplace(it.key(), Tensor::from_data(r, c, data));
  }
  return values;
}

void load_checkpoint_into(ParamSet& params, const std::string& path) {
  auto values = load_checkpoint_values(path);
  for (const auto& [name, param] : params.items) {
    auto it = values.find(name);
    if (it == values.end()) throw ConfigError("load_checkpoint: missing parameter " + name);
    if (!it->second.same_shape(param.value)) {
      throw ConfigError("load_checkpoint: shape mismatch for " + name + ": file " +
                        it->second.shape_str() + " vs model " + param.value.shape_str());
    }
  }
  for (const auto& [name, value] : values) {
    if (!params.contains(name)) {
      throw ConfigError("load_checkpoint: unexpected parameter " + name);
    }
    params.set_value(name, value);
  }
}

const Tensor& BoundParams::at(const std::string& name) const {
  auto it = handles.find(name);
  if (it == handles.end()) throw UsageError("BoundParams::at: unknown parameter " + name);
  return it->second;
}

BoundParams bind_params(const ParamSet& params, Tape* tape) {
  BoundParams bound;
  for (const auto& [name, param] : params.items) {
    bound.handles.emplace(name, tape ? tape->track(param.value) : param.value);
  }
  return bound;
}

Tensor init_uniform(Rng& rng, int rows, int cols, int fan_in) {
  if (fan_in < 1) throw UsageError("init_uniform: fan_in must be positive");
  double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(rows) * cols);
  for (double& x : v) x = rng.uniform(-b, b);
  return Tensor::from_data(rows, cols, v);
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

void add_mlp_params(ParamSet& params, const std::string& prefix, const MlpSpec& spec, Rng& rng) {
  if (spec.dims.size() < 2) throw UsageError("add_mlp_params: need at least in/out dims");
  for (int d : spec.dims) {
    if (d < 1) throw UsageError("add_mlp_params: dims must be positive");
  }
  for (size_t l = 0; l + 1 < spec.dims.size(); ++l) {
    int in = spec.dims[l];
    int out = spec.dims[l + 1];
    params.add(prefix + ".W" + std::to_string(l), init_uniform(rng, out, in, in));
    params.add(prefix + ".b" + std::to_string(l), init_uniform(rng, 1, out, in));
  }
}

Tensor mlp_forward(const BoundParams& p, const std::string& prefix, const MlpSpec& spec,
                   const Tensor& x) {
  if (x.cols != spec.dims.front()) {
    throw ShapeError("mlp_forward: input width " + std::to_string(x.cols) + " != " +
                     std::to_string(spec.dims.front()));
  }
  Tensor h = x;
  for (size_t l = 0; l + 1 < spec.dims.size(); ++l) {
    const Tensor& w = p.at(prefix + ".W" + std::to_string(l));
    const Tensor& b = p.at(prefix + ".b" + std::to_string(l));
    h = add_rowvec(matmul(h, transpose(w)), b);
    if (l + 2 < spec.dims.size()) h = apply_activation(spec.hidden, h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// PICNN
// ---------------------------------------------------------------------------

namespace {

// Width of the context path entering layer i.
int picnn_u_dim(const PicnnSpec& spec, size_t i) {
  return i == 0 ? spec.x_dim : spec.layers[i - 1];
}

std::string lname(const std::string& prefix, const char* part, size_t i) {
  return prefix + "." + part + std::to_string(i);
}

}  // namespace

void add_picnn_params(ParamSet& params, const std::string& prefix, const PicnnSpec& spec,
                      Rng& rng) {
  if (spec.x_dim < 1) throw UsageError("add_picnn_params: x_dim must be positive");
  if (spec.layers.empty()) throw UsageError("add_picnn_params: need at least one layer");
  for (int d : spec.layers) {
    if (d < 1) throw UsageError("add_picnn_params: layer widths must be positive");
  }
  if (spec.y_mono_dim < 0 || spec.y_free_dim < 0) {
    throw UsageError("add_picnn_params: negative convex input width");
  }
  const size_t k = spec.layers.size();
  const Constraint nonneg{ConstraintKind::NonNeg, 0.0};
  for (size_t i = 0; i < k; ++i) {
    int u_dim = picnn_u_dim(spec, i);
    int out = spec.layers[i];
    params.add(lname(prefix, "u_W", i), init_uniform(rng, u_dim, out, u_dim));
    params.add(lname(prefix, "u_b", i), init_uniform(rng, 1, out, u_dim));
    if (i >= 1) {
      int z_dim = spec.layers[i - 1];
      params.add(lname(prefix, "z_W", i), init_uniform(rng, z_dim, out, z_dim), nonneg);
      params.add(lname(prefix, "zgate_W", i), init_uniform(rng, u_dim, z_dim, u_dim));
      params.add(lname(prefix, "zgate_b", i), init_uniform(rng, 1, z_dim, u_dim));
    }
    if (spec.y_mono_dim > 0) {
      params.add(lname(prefix, "ym_W", i), init_uniform(rng, spec.y_mono_dim, out, spec.y_mono_dim),
                 nonneg);
      params.add(lname(prefix, "ymgate_W", i), init_uniform(rng, u_dim, spec.y_mono_dim, u_dim));
      params.add(lname(prefix, "ymgate_b", i), init_uniform(rng, 1, spec.y_mono_dim, u_dim));
    }
    if (spec.y_free_dim > 0) {
      params.add(lname(prefix, "yf_W", i), init_uniform(rng, spec.y_free_dim, out, spec.y_free_dim));
      params.add(lname(prefix, "yfgate_W", i), init_uniform(rng, u_dim, spec.y_free_dim, u_dim));
      params.add(lname(prefix, "yfgate_b", i), init_uniform(rng, 1, spec.y_free_dim, u_dim));
    }
    if (i + 1 < k) {
      int u_next = spec.layers[i];
      params.add(lname(prefix, "ut_W", i), init_uniform(rng, u_dim, u_next, u_dim));
      params.add(lname(prefix, "ut_b", i), init_uniform(rng, 1, u_next, u_dim));
    }
  }
}

Tensor picnn_forward(const BoundParams& p, const std::string& prefix, const PicnnSpec& spec,
                     const Tensor& x, const Tensor& y_mono, const Tensor& y_free) {
  if (x.rows != 1 || x.cols != spec.x_dim) {
    throw ShapeError("picnn_forward: x must be 1x" + std::to_string(spec.x_dim) + ", got " +
                     x.shape_str());
  }
  if (spec.y_mono_dim > 0 && (y_mono.rows != 1 || y_mono.cols != spec.y_mono_dim)) {
    throw ShapeError("picnn_forward: y_mono must be 1x" + std::to_string(spec.y_mono_dim) +
                     ", got " + y_mono.shape_str());
  }
  if (spec.y_free_dim > 0 && (y_free.rows != 1 || y_free.cols != spec.y_free_dim)) {
    throw ShapeError("picnn_forward: y_free must be 1x" + std::to_string(spec.y_free_dim) +
                     ", got " + y_free.shape_str());
  }
  const size_t k = spec.layers.size();
  Tensor u = x;
  Tensor z;
  for (size_t i = 0; i < k; ++i) {
    Tensor zt = add_rowvec(matmul(u, p.at(lname(prefix, "u_W", i))), p.at(lname(prefix, "u_b", i)));
    if (i >= 1) {
      Tensor gate =
          relu(add_rowvec(matmul(u, p.at(lname(prefix, "zgate_W", i))),
                          p.at(lname(prefix, "zgate_b", i))));
      zt = add(zt, matmul(mul(z, gate), p.at(lname(prefix, "z_W", i))));
    }
    if (spec.y_mono_dim > 0) {
      Tensor gate =
          relu(add_rowvec(matmul(u, p.at(lname(prefix, "ymgate_W", i))),
                          p.at(lname(prefix, "ymgate_b", i))));
      zt = add(zt, matmul(mul(y_mono, gate), p.at(lname(prefix, "ym_W", i))));
    }
    if (spec.y_free_dim > 0) {
      Tensor gate = add_rowvec(matmul(u, p.at(lname(prefix, "yfgate_W", i))),
                               p.at(lname(prefix, "yfgate_b", i)));
      zt = add(zt, matmul(mul(y_free, gate), p.at(lname(prefix, "yf_W", i))));
    }
    z = (i + 1 < k) ? softplus(zt) : zt;
    if (i + 1 < k) {
      u = tanh_t(add_rowvec(matmul(u, p.at(lname(prefix, "ut_W", i))),
                            p.at(lname(prefix, "ut_b", i))));
    }
  }
  return z;
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

namespace {

std::string head_name(const std::string& prefix, int h, const char* part) {
  return prefix + ".h" + std::to_string(h) + "." + part;
}

}  // namespace

void add_attention_params(ParamSet& params, const std::string& prefix, const AttnSpec& spec,
                          Rng& rng) {
  if (spec.heads < 1) throw UsageError("add_attention_params: need at least one head");
  if (spec.p < 1) throw UsageError("add_attention_params: node feature width must be positive");
  int s_eff = spec.r > 0 ? spec.s : 0;
  for (int h = 0; h < spec.heads; ++h) {
    params.add(head_name(prefix, h, "a"), init_uniform(rng, 1, 2 * spec.q + s_eff, 2 * spec.q + s_eff));
    params.add(head_name(prefix, h, "mx"), init_uniform(rng, spec.q, spec.p, spec.p));
    if (s_eff > 0) {
      params.add(head_name(prefix, h, "me"), init_uniform(rng, spec.s, spec.r, spec.r));
    }
  }
}

Tensor softmax_row(const Tensor& logits) {
  if (logits.rows != 1) throw ShapeError("softmax_row: expected a 1-row tensor");
  if (logits.cols == 0) return logits;
  double c = logits.at(0);
  for (int i = 1; i < logits.cols; ++i) c = std::max(c, logits.at(i));
  Tensor e = exp_t(scalar_add(logits, -c));
  return div(e, sum_all(e));
}

Tensor attention_weights(const BoundParams& p, const std::string& prefix, const AttnSpec& spec,
                         const Graph& g, int i) {
  Neighborhood nb = neighbors(g, i);
  int m = static_cast<int>(nb.ids.size());
  if (m == 0) return Tensor::from_data(spec.heads, 0, {});
  Tensor x_i = row_of(g.x, i);
  Tensor out;
  for (int h = 0; h < spec.heads; ++h) {
    const Tensor& mx = p.at(head_name(prefix, h, "mx"));
    const Tensor& a = p.at(head_name(prefix, h, "a"));
    Tensor proj_i = matmul(x_i, transpose(mx));
    Tensor logits;
    for (int idx = 0; idx < m; ++idx) {
      int j = nb.ids[idx];
      Tensor cat = concat_cols(proj_i, matmul(row_of(g.x, j), transpose(mx)));
      if (spec.r > 0) {
        const Tensor& me = p.at(head_name(prefix, h, "me"));
        cat = concat_cols(cat, matmul(edge_feature(g, i, j), transpose(me)));
      }
      Tensor score = leaky_relu(matmul(cat, transpose(a)), spec.leaky_slope);
      logits = (idx == 0) ? score : concat_cols(logits, score);
    }
    Tensor w = softmax_row(logits);
    out = (h == 0) ? w : concat_rows(out, w);
  }
  return out;
}

}  // namespace hogwild
