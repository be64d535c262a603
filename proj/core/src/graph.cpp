#include "hogwild/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hogwild/errors.hpp"

namespace hogwild {

namespace {

using nlohmann::json;

void check_node(const Graph& g, int i, const char* who) {
  if (i < 0 || i >= g.n) {
    throw UsageError(std::string(who) + ": node " + std::to_string(i) + " out of range [0, " +
                     std::to_string(g.n) + ")");
  }
}

}  // namespace

int Graph::pair_index(int i, int j) const {
  if (i > j) std::swap(i, j);
  auto it = std::lower_bound(pairs.begin(), pairs.end(), std::make_pair(i, j));
  if (it == pairs.end() || *it != std::make_pair(i, j)) return -1;
  return static_cast<int>(it - pairs.begin());
}

Graph make_graph(int n, const std::vector<std::pair<int, int>>& undirected_pairs, Tensor x,
                 Tensor e, Tensor y) {
  if (n <= 0) throw UsageError("make_graph: need at least one node");
  if (x.rows != n) {
    throw UsageError("make_graph: feature rows " + std::to_string(x.rows) + " != n " +
                     std::to_string(n));
  }
  Graph g;
  g.n = n;
  g.x = std::move(x);

  g.pairs.reserve(undirected_pairs.size());
  for (auto [a, b] : undirected_pairs) {
    if (a < 0 || a >= n || b < 0 || b >= n) {
      throw UsageError("make_graph: edge (" + std::to_string(a) + "," + std::to_string(b) +
                       ") out of range");
    }
    if (a == b) throw UsageError("make_graph: self-loop at node " + std::to_string(a));
    if (a > b) std::swap(a, b);
    g.pairs.emplace_back(a, b);
  }
  std::vector<int> order(g.pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return g.pairs[a] < g.pairs[b]; });
  std::vector<std::pair<int, int>> sorted_pairs(g.pairs.size());
  for (size_t i = 0; i < order.size(); ++i) sorted_pairs[i] = g.pairs[order[i]];
  for (size_t i = 1; i < sorted_pairs.size(); ++i) {
    if (sorted_pairs[i] == sorted_pairs[i - 1]) {
      throw UsageError("make_graph: duplicate edge (" + std::to_string(sorted_pairs[i].first) +
                       "," + std::to_string(sorted_pairs[i].second) + ")");
    }
  }
  g.pairs = std::move(sorted_pairs);

  if (!e.empty()) {
    if (e.rows != static_cast<int>(g.pairs.size())) {
      throw UsageError("make_graph: edge feature rows " + std::to_string(e.rows) +
                       " != edge count " + std::to_string(g.pairs.size()));
    }
    // Reorder feature rows to match the sorted pair list.
    std::vector<double> rows(e.size());
    for (size_t i = 0; i < order.size(); ++i) {
      for (int c = 0; c < e.cols; ++c) rows[i * e.cols + c] = e.at(order[i], c);
    }
    g.edge_feats = Tensor::from_data(e.rows, e.cols, rows);
  }

  if (!y.empty()) {
    if (y.rows != n) {
      throw UsageError("make_graph: target rows " + std::to_string(y.rows) + " != n " +
                       std::to_string(n));
    }
    g.y = std::move(y);
  }

  g.adjacency.assign(n, {});
  for (auto [a, b] : g.pairs) {
    g.adjacency[a].push_back(b);
    g.adjacency[b].push_back(a);
  }
  for (auto& nbrs : g.adjacency) std::sort(nbrs.begin(), nbrs.end());

  g.edges.reserve(2 * g.pairs.size());
  for (int i = 0; i < n; ++i) {
    for (int j : g.adjacency[i]) g.edges.emplace_back(i, j);
  }
  return g;
}

Neighborhood neighbors(const Graph& g, int i) {
  check_node(g, i, "neighbors");
  return Neighborhood{i, std::span<const int>(g.adjacency[i])};
}

int degree(const Graph& g, int i) {
  check_node(g, i, "degree");
  return static_cast<int>(g.adjacency[i].size());
}

Tensor edge_feature(const Graph& g, int i, int j) {
  check_node(g, i, "edge_feature");
  check_node(g, j, "edge_feature");
  int idx = g.pair_index(i, j);
  if (idx < 0) {
    throw UsageError("edge_feature: no edge (" + std::to_string(i) + "," + std::to_string(j) +
                     ")");
  }
  int r = g.edge_feat_dim();
  std::vector<double> row(r);
  for (int c = 0; c < r; ++c) row[c] = g.edge_feats.at(idx, c);
  return Tensor::from_data(1, r, row);
}

Tensor feature_row(const Graph& g, int i) {
  check_node(g, i, "feature_row");
  std::vector<double> row(g.x.cols);
  for (int c = 0; c < g.x.cols; ++c) row[c] = g.x.at(i, c);
  return Tensor::from_data(1, g.x.cols, row);
}

Tensor target_row(const Graph& g, int i) {
  check_node(g, i, "target_row");
  if (!g.has_targets()) throw UsageError("target_row: graph has no targets");
  std::vector<double> row(g.y.cols);
  for (int c = 0; c < g.y.cols; ++c) row[c] = g.y.at(i, c);
  return Tensor::from_data(1, g.y.cols, row);
}

Tensor renormalized_adjacency(const Graph& g) {
  std::vector<double> inv_sqrt(g.n);
  for (int i = 0; i < g.n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(1.0 + degree(g, i));
  std::vector<double> a(static_cast<size_t>(g.n) * g.n, 0.0);
  for (int i = 0; i < g.n; ++i) a[static_cast<size_t>(i) * g.n + i] = inv_sqrt[i] * inv_sqrt[i];
  for (auto [i, j] : g.pairs) {
    double v = inv_sqrt[i] * inv_sqrt[j];
    a[static_cast<size_t>(i) * g.n + j] = v;
    a[static_cast<size_t>(j) * g.n + i] = v;
  }
  return Tensor::from_data(g.n, g.n, a);
}

Tensor renormalized_laplacian(const Graph& g) {
  Tensor adj = renormalized_adjacency(g);
  std::vector<double> l(adj.values());
  for (int i = 0; i < g.n; ++i) {
    for (int j = 0; j < g.n; ++j) {
      size_t k = static_cast<size_t>(i) * g.n + j;
      l[k] = (i == j ? 1.0 : 0.0) - l[k];
    }
  }
  return Tensor::from_data(g.n, g.n, l);
}

double adjacency_lambda_max(const Graph& g, int iters) {
  Tensor adj = renormalized_adjacency(g);
  std::vector<double> v(g.n, 1.0 / std::sqrt(static_cast<double>(g.n)));
  std::vector<double> w(g.n);
  for (int it = 0; it < iters; ++it) {
    // w = (A_hat + I) v
    for (int i = 0; i < g.n; ++i) {
      double s = v[i];
      for (int j = 0; j < g.n; ++j) s += adj.at(i, j) * v[j];
      w[i] = s;
    }
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (int i = 0; i < g.n; ++i) v[i] = w[i] / norm;
  }
  double rayleigh = 0.0;
  for (int i = 0; i < g.n; ++i) {
    double s = v[i];
    for (int j = 0; j < g.n; ++j) s += adj.at(i, j) * v[j];
    rayleigh += v[i] * s;
  }
  return rayleigh - 1.0;
}

namespace {

json matrix_to_json(const Tensor& t) {
  json rows = json::array();
  for (int i = 0; i < t.rows; ++i) {
    json row = json::array();
    for (int c = 0; c < t.cols; ++c) row.push_back(t.at(i, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Tensor matrix_from_json(const json& rows, const char* name) {
  if (!rows.is_array()) throw ConfigError(std::string("graph json: ") + name + " must be an array");
  int r = static_cast<int>(rows.size());
  int c = -1;
  std::vector<double> data;
  for (const auto& row : rows) {
    if (!row.is_array()) {
      throw ConfigError(std::string("graph json: ") + name + " rows must be arrays");
    }
    if (c < 0) {
      c = static_cast<int>(row.size());
      data.reserve(static_cast<size_t>(r) * c);
    } else if (static_cast<int>(row.size()) != c) {
      throw ConfigError(std::string("graph json: ragged rows in ") + name);
    }
    for (const auto& v : row) {
      if (!v.is_number()) {
        throw ConfigError(std::string("graph json: non-numeric entry in ") + name);
      }
      data.push_back(v.get<double>());
    }
  }
  return Tensor::from_data(r, c < 0 ? 0 : c, data);
}

}  // namespace

std::string graph_to_json(const Graph& g) {
  json doc;
  doc["n"] = g.n;
  json edges = json::array();
  for (auto [i, j] : g.edges) edges.push_back(json::array({i, j}));
  doc["edges"] = std::move(edges);
  doc["x"] = matrix_to_json(g.x);
  if (g.edge_feat_dim() > 0) {
    json e = json::array();
    for (auto [i, j] : g.edges) {
      int idx = g.pair_index(i, j);
      json row = json::array();
      for (int c = 0; c < g.edge_feats.cols; ++c) row.push_back(g.edge_feats.at(idx, c));
      e.push_back(std::move(row));
    }
    doc["e"] = std::move(e);
  } else {
    doc["e"] = nullptr;
  }
  doc["y"] = g.has_targets() ? matrix_to_json(g.y) : json(nullptr);
  return doc.dump();
}

Graph graph_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("graph json: parse failure: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("n") || !doc.contains("edges") || !doc.contains("x")) {
    throw ConfigError("graph json: missing one of required keys n/edges/x");
  }
  if (!doc["n"].is_number_integer()) throw ConfigError("graph json: n must be an integer");
  int n = doc["n"].get<int>();

  std::vector<std::pair<int, int>> directed;
  for (const auto& e : doc["edges"]) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
      throw ConfigError("graph json: edges must be [i,j] integer pairs");
    }
    directed.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  // The file stores both orientations; rebuild the unordered pair list and
  // check symmetry.
  std::vector<std::pair<int, int>> sorted = directed;
  std::sort(sorted.begin(), sorted.end());
  for (auto [i, j] : directed) {
    if (!std::binary_search(sorted.begin(), sorted.end(), std::make_pair(j, i))) {
      throw ConfigError("graph json: edge (" + std::to_string(i) + "," + std::to_string(j) +
                        ") has no reverse orientation");
    }
  }
  std::vector<std::pair<int, int>> undirected;
  for (auto [i, j] : sorted) {
    if (i < j) undirected.emplace_back(i, j);
  }

  Tensor x = matrix_from_json(doc["x"], "x");

  Tensor e;
  if (doc.contains("e") && !doc["e"].is_null()) {
    Tensor expanded = matrix_from_json(doc["e"], "e");
    if (expanded.rows != static_cast<int>(directed.size())) {
      throw ConfigError("graph json: e rows must align with edges");
    }
    // Collapse to one row per unordered pair; both orientations must agree.
    std::vector<double> rows(undirected.size() * static_cast<size_t>(expanded.cols));
    std::vector<char> seen(undirected.size(), 0);
    for (size_t k = 0; k < directed.size(); ++k) {
      auto [i, j] = directed[k];
      if (i > j) std::swap(i, j);
      auto it = std::lower_bound(undirected.begin(), undirected.end(), std::make_pair(i, j));
      size_t idx = static_cast<size_t>(it - undirected.begin());
      for (int c = 0; c < expanded.cols; ++c) {
        double v = expanded.at(static_cast<int>(k), c);
        if (!seen[idx]) {
          rows[idx * expanded.cols + c] = v;
        } else if (rows[idx * expanded.cols + c] != v) {
          throw ConfigError("graph json: edge feature rows differ between orientations");
        }
      }
      seen[idx] = 1;
    }
    e = Tensor::from_data(static_cast<int>(undirected.size()), expanded.cols, rows);
  }

  Tensor y;
  if (doc.contains("y") && !doc["y"].is_null()) y = matrix_from_json(doc["y"], "y");

  try {
    return make_graph(n, undirected, std::move(x), std::move(e), std::move(y));
  } catch (const UsageError& err) {
    throw ConfigError(std::string("graph json: ") + err.what());
  }
}

void save_graph_json(const Graph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("save_graph_json: cannot open " + path);
  out << graph_to_json(g);
  out << '\n';
  if (!out) throw UsageError("save_graph_json: write failure on " + path);
}

Graph load_graph_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("load_graph_json: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return graph_from_json(ss.str());
}

}  // namespace hogwild
