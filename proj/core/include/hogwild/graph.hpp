#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hogwild/tensor.hpp"

namespace hogwild {

// Undirected graph with dense node features, optional symmetric edge features
// and optional targets. Immutable after construction; safe to share across
// threads. Dense n x n operators are fine here: experiment graphs stay small.
struct Graph {
  int n = 0;
  // Both orientations of every edge, sorted lexicographically.
  std::vector<std::pair<int, int>> edges;
  // Unordered pairs (i < j), sorted; rows of edge_feats align with this list.
  std::vector<std::pair<int, int>> pairs;
  Tensor x;           // n x p node features
  Tensor edge_feats;  // |pairs| x r, r may be 0
  Tensor y;           // n x J targets, optional (empty when absent)

  std::vector<std::vector<int>> adjacency;  // sorted neighbor lists

  int feat_dim() const { return x.cols; }
  int edge_feat_dim() const { return edge_feats.rows > 0 ? edge_feats.cols : 0; }
  bool has_targets() const { return !y.empty(); }
  // Index into pairs/edge_feats for the unordered pair, -1 if not an edge.
  int pair_index(int i, int j) const;
};

struct Neighborhood {
  int node = -1;
  std::span<const int> ids;  // sorted
};

// `undirected_pairs` lists each edge once (endpoints distinct); `e` rows align
// with that list. Rejects self-loops, duplicates and out-of-range endpoints.
Graph make_graph(int n, const std::vector<std::pair<int, int>>& undirected_pairs, Tensor x,
                 Tensor e = Tensor(), Tensor y = Tensor());

Neighborhood neighbors(const Graph& g, int i);
int degree(const Graph& g, int i);

// Edge feature row (1 x r) served identically for (i,j) and (j,i).
Tensor edge_feature(const Graph& g, int i, int j);

// Untracked 1-row copies of node data.
Tensor feature_row(const Graph& g, int i);
Tensor target_row(const Graph& g, int i);

// (D+I)^{-1/2} (A+I) (D+I)^{-1/2}; symmetric, entries in [0,1], spectral radius 1.
Tensor renormalized_adjacency(const Graph& g);

// I minus the renormalized adjacency; symmetric positive semi-definite.
Tensor renormalized_laplacian(const Graph& g);

// Largest eigenvalue of the renormalized adjacency, by power iteration on the
// identity-shifted matrix (the shift keeps bipartite spectra from oscillating).
double adjacency_lambda_max(const Graph& g, int iters = 200);

// JSON document {"n", "edges", "x", "e"|null, "y"|null}; edge-feature rows in
// the file align with the directed edge list. Canonical edge order round-trips
// byte-identically.
std::string graph_to_json(const Graph& g);
Graph graph_from_json(const std::string& text);
void save_graph_json(const Graph& g, const std::string& path);
Graph load_graph_json(const std::string& path);

}  // namespace hogwild
