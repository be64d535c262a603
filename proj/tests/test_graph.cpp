#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "hogwild/errors.hpp"
#include "hogwild/graph.hpp"

using namespace hogwild;

namespace {

Graph path3() {
  Tensor x = Tensor::from_data(3, 2, {1, 2, 3, 4, 5, 6});
  return make_graph(3, {{0, 1}, {1, 2}}, x);
}

}  // namespace

TEST_CASE("make_graph validates and canonicalizes") {
  Tensor x = Tensor::from_data(3, 1, {1, 2, 3});
  Graph g = make_graph(3, {{2, 1}, {1, 0}}, x);
  CHECK(g.n == 3);
  CHECK(g.pairs == std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
  CHECK(g.edges == std::vector<std::pair<int, int>>{{0, 1}, {1, 0}, {1, 2}, {2, 1}});
  CHECK(g.adjacency[1] == std::vector<int>{0, 2});
  CHECK(degree(g, 1) == 2);
  CHECK(degree(g, 0) == 1);
  CHECK(neighbors(g, 2).ids.size() == 1);
  CHECK(neighbors(g, 2).ids[0] == 1);
  CHECK(g.pair_index(2, 1) == 1);
  CHECK(g.pair_index(0, 2) == -1);

  CHECK_THROWS_AS(make_graph(0, {}, Tensor()), UsageError);
  CHECK_THROWS_AS(make_graph(3, {{0, 0}}, x), UsageError);
  CHECK_THROWS_AS(make_graph(3, {{0, 3}}, x), UsageError);
  CHECK_THROWS_AS(make_graph(3, {{0, 1}, {1, 0}}, x), UsageError);
  CHECK_THROWS_AS(make_graph(3, {{0, 1}}, Tensor::zeros(2, 1)), UsageError);
  CHECK_THROWS_AS(make_graph(3, {{0, 1}}, x, Tensor::zeros(2, 1)), UsageError);
  CHECK_THROWS_AS(make_graph(3, {{0, 1}}, x, Tensor(), Tensor::zeros(2, 1)), UsageError);
}

TEST_CASE("edge features are symmetric and aligned to sorted pairs") {
  Tensor x = Tensor::zeros(3, 1);
  Tensor e = Tensor::from_data(2, 2, {10, 11, 20, 21});
  // pairs given unsorted; e row k stays attached to the k-th given pair
  Graph g = make_graph(3, {{2, 1}, {0, 1}}, x, e);
  Tensor r01 = edge_feature(g, 0, 1);
  Tensor r10 = edge_feature(g, 1, 0);
  CHECK(r01.at(0, 0) == r10.at(0, 0));
  CHECK(r01.at(0, 1) == 21.0);
  CHECK(edge_feature(g, 1, 2).at(0, 0) == 10.0);
  CHECK(g.edge_feat_dim() == 2);
  CHECK_THROWS_AS(edge_feature(g, 0, 2), UsageError);
}

TEST_CASE("row accessors copy node data") {
  Tensor x = Tensor::from_data(2, 2, {1, 2, 3, 4});
  Tensor y = Tensor::from_data(2, 1, {5, 6});
  Graph g = make_graph(2, {{0, 1}}, x, Tensor(), y);
  CHECK(feature_row(g, 1).at(0, 1) == 4.0);
  CHECK(target_row(g, 0).at(0, 0) == 5.0);
  Graph no_y = make_graph(2, {{0, 1}}, x);
  CHECK(!no_y.has_targets());
  CHECK_THROWS_AS(target_row(no_y, 0), UsageError);
}

TEST_CASE("renormalized adjacency of a single edge is the half matrix") {
  Tensor x = Tensor::zeros(2, 1);
  Graph g = make_graph(2, {{0, 1}}, x);
  Tensor a = renormalized_adjacency(g);
  for (int i = 0; i < 4; ++i) CHECK(a.at(i) == doctest::Approx(0.5).epsilon(1e-14));
  Tensor l = renormalized_laplacian(g);
  CHECK(l.at(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(l.at(0, 1) == doctest::Approx(-0.5).epsilon(1e-14));
}

TEST_CASE("renormalized adjacency of a path matches hand values") {
  Graph g = path3();
  Tensor a = renormalized_adjacency(g);
  CHECK(a.at(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(a.at(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(a.at(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-14));
  CHECK(a.at(0, 2) == 0.0);
  CHECK(a.at(1, 0) == a.at(0, 1));
  // laplacian is I - A_hat entrywise
  Tensor l = renormalized_laplacian(g);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(l.at(i, j) == doctest::Approx((i == j ? 1.0 : 0.0) - a.at(i, j)).epsilon(1e-14));
}

TEST_CASE("spectral radius of the renormalized adjacency is one when connected") {
  CHECK(adjacency_lambda_max(path3()) == doctest::Approx(1.0).epsilon(1e-10));
  Tensor x = Tensor::zeros(5, 1);
  Graph ring = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}}, x);
  CHECK(adjacency_lambda_max(ring) == doctest::Approx(1.0).epsilon(1e-10));
  Graph lone = make_graph(1, {}, Tensor::zeros(1, 1));
  CHECK(adjacency_lambda_max(lone) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("json round trip is byte identical") {
  Tensor x = Tensor::from_data(3, 2, {0.5, -1.25, 2, 3, 4.75, 5});
  Tensor e = Tensor::from_data(2, 1, {0.125, 0.375});
  Tensor y = Tensor::from_data(3, 1, {1, 0, 1});
  Graph g = make_graph(3, {{0, 1}, {1, 2}}, x, e, y);
  std::string once = graph_to_json(g);
  Graph back = graph_from_json(once);
  CHECK(graph_to_json(back) == once);
  CHECK(back.pair_index(1, 2) == 1);
  CHECK(edge_feature(back, 2, 1).at(0, 0) == 0.375);

  Graph bare = make_graph(2, {{0, 1}}, Tensor::ones(2, 1));
  std::string s = graph_to_json(bare);
  Graph bare_back = graph_from_json(s);
  CHECK(graph_to_json(bare_back) == s);
  CHECK(!bare_back.has_targets());
  CHECK(bare_back.edge_feat_dim() == 0);
}

TEST_CASE("json file round trip") {
  Graph g = path3();
  std::string path = "/tmp/hogwild_graph_test.json";
  save_graph_json(g, path);
  Graph back = load_graph_json(path);
  CHECK(graph_to_json(back) == graph_to_json(g));
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_graph_json("/tmp/hogwild_no_such_graph.json"), UsageError);
}

TEST_CASE("malformed json is rejected with the reason") {
  CHECK_THROWS_AS(graph_from_json("not json at all"), ConfigError);
  CHECK_THROWS_AS(graph_from_json("{\"n\": 2}"), ConfigError);
  // a directed edge without its reverse
  CHECK_THROWS_WITH_AS(graph_from_json("{\"n\": 2, \"edges\": [[0,1]], \"x\": [[1],[2]]}"),
                       doctest::Contains("reverse orientation"), ConfigError);
  // node-count mismatch surfaces as a config problem, not a usage one
  CHECK_THROWS_AS(
      graph_from_json("{\"n\": 2, \"edges\": [[0,1],[1,0]], \"x\": [[1],[2],[3]]}"),
      ConfigError);
  // edge feature rows must agree between the two orientations of an edge
  std::string mism =
      "{\"n\": 2, \"edges\": [[0,1],[1,0]], \"x\": [[1],[2]],"
      " \"e\": [[0.5],[0.6]], \"y\": null}";
  CHECK_THROWS_WITH_AS(graph_from_json(mism), doctest::Contains("differ between orientations"),
                       ConfigError);
  std::string ragged = "{\"n\": 2, \"edges\": [[0,1],[1,0]], \"x\": [[1],[2, 3]]}";
  CHECK_THROWS_AS(graph_from_json(ragged), ConfigError);
}
