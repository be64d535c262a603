#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "hogwild/errors.hpp"
#include "hogwild/nn.hpp"

using namespace hogwild;

TEST_CASE("param set stores, updates and validates shapes") {
  ParamSet p;
  p.add("w", Tensor::from_data(2, 2, {1, -2, 3, -4}));
  CHECK(p.contains("w"));
  CHECK(p.size() == 1);
  CHECK(p.value("w").at(1) == -2.0);
  p.set_value("w", Tensor::full(2, 2, 7.0));
  CHECK(p.value("w").at(0) == 7.0);
  CHECK_THROWS_AS(p.set_value("w", Tensor::zeros(1, 2)), UsageError);
  CHECK_THROWS_AS(p.value("missing"), UsageError);
  CHECK_THROWS_AS(p.add("w", Tensor::zeros(2, 2)), UsageError);
}

TEST_CASE("constraint projection clamps and rescales") {
  ParamSet p;
  p.add("free", Tensor::from_data(1, 2, {-5, 5}));
  p.add("nonneg", Tensor::from_data(1, 3, {-1, 0, 2}), {ConstraintKind::NonNeg, 0.0});
  // row sums of |.|: 0.6 and 1.9 -> scale by 0.95/1.9 = 0.5
  p.add("bounded", Tensor::from_data(2, 2, {0.2, -0.4, 1.5, 0.4}),
        {ConstraintKind::InfNormBound, 0.95});
  project_constraints(p);
  CHECK(p.value("free").at(0) == -5.0);
  CHECK(p.value("nonneg").at(0) == 0.0);
  CHECK(p.value("nonneg").at(2) == 2.0);
  CHECK(p.value("bounded").at(0, 0) == doctest::Approx(0.1));
  CHECK(p.value("bounded").at(1, 0) == doctest::Approx(0.75));
  // idempotent: a second projection changes nothing
  Tensor before = p.value("bounded");
  project_constraints(p);
  CHECK(p.value("bounded").at(1, 0) == before.at(1, 0));
  // already within the bound: untouched exactly
  ParamSet q;
  q.add("b", Tensor::from_data(1, 2, {0.3, -0.3}), {ConstraintKind::InfNormBound, 0.95});
  project_constraints(q);
  CHECK(q.value("b").at(0) == 0.3);
}

TEST_CASE("init_uniform is deterministic and bounded by fan-in") {
  Rng a(7), b(7), c(8);
  Tensor ta = init_uniform(a, 3, 4, 16);
  Tensor tb = init_uniform(b, 3, 4, 16);
  Tensor tc = init_uniform(c, 3, 4, 16);
  CHECK(ta.values() == tb.values());
  CHECK(ta.values() != tc.values());
  for (int i = 0; i < ta.size(); ++i) CHECK(std::abs(ta.at(i)) <= 0.25);
}

TEST_CASE("binding to a tape records gradients, binding to none does not") {
  ParamSet p;
  p.add("w", Tensor::from_data(1, 2, {2, 3}));
  BoundParams raw = bind_params(p, nullptr);
  CHECK(!raw.at("w").tracked());
  Tape tape;
  BoundParams bp = bind_params(p, &tape);
  CHECK(bp.at("w").tracked());
  Gradients g = tape.backward(sum_all(square(bp.at("w"))));
  CHECK(g.grad(bp.at("w")).at(1) == 6.0);
  CHECK_THROWS_AS(bp.at("nope"), UsageError);
}

TEST_CASE("mlp forward matches a hand computation") {
  // dims (2, 2, 1), relu hidden: y = W1 relu(W0 x + b0) + b1
  ParamSet p;
  p.add("f.W0", Tensor::from_data(2, 2, {1, 0, -1, 1}));
  p.add("f.b0", Tensor::from_data(1, 2, {0, 0.5}));
  p.add("f.W1", Tensor::from_data(1, 2, {2, 3}));
  p.add("f.b1", Tensor::from_data(1, 1, {0.25}));
  MlpSpec spec{{2, 2, 1}, Activation::Relu};
  BoundParams bp = bind_params(p, nullptr);
  // x = (1, 2): W0 x = (1, 1), +b0 = (1, 1.5), relu same, W1. = 2 + 4.5, +b1
  Tensor y = mlp_forward(bp, "f", spec, Tensor::from_row({1, 2}));
  CHECK(y.rows == 1);
  CHECK(y.cols == 1);
  CHECK(y.scalar() == doctest::Approx(6.75));
  // x = (-1, 0): W0 x = (-1, 1), +b0 = (-1, 1.5), relu = (0, 1.5), y = 4.75
  CHECK(mlp_forward(bp, "f", spec, Tensor::from_row({-1, 0})).scalar() ==
        doctest::Approx(4.75));
  // batch of two rows evaluates rowwise
  Tensor batch = mlp_forward(bp, "f", spec, Tensor::from_data(2, 2, {1, 2, -1, 0}));
  CHECK(batch.rows == 2);
  CHECK(batch.at(0, 0) == doctest::Approx(6.75));
  CHECK(batch.at(1, 0) == doctest::Approx(4.75));
}

TEST_CASE("add_mlp_params creates every layer with the documented shapes") {
  ParamSet p;
  Rng rng(3);
  MlpSpec spec{{5, 16, 16, 2}, Activation::Relu};
  add_mlp_params(p, "m", spec, rng);
  CHECK(p.size() == 6);
  CHECK(p.value("m.W0").rows == 16);
  CHECK(p.value("m.W0").cols == 5);
  CHECK(p.value("m.b2").rows == 1);
  CHECK(p.value("m.b2").cols == 2);
}

TEST_CASE("softmax_row matches the two-logit oracle") {
  Tensor s = softmax_row(Tensor::from_row({1.0, 0.0}));
  CHECK(s.at(0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(s.at(1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  // large logits stay finite through the max shift
  Tensor big = softmax_row(Tensor::from_row({1000.0, 999.0}));
  CHECK(big.at(0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(softmax_row(Tensor::from_row({4.0})).scalar() == 1.0);
}

TEST_CASE("picnn output is convex and monotone in the y_mono block") {
  ParamSet p;
  Rng rng(11);
  PicnnSpec spec{2, 2, 0, {4, 4, 1}};
  add_picnn_params(p, "e", spec, rng);
  project_constraints(p);
  BoundParams bp = bind_params(p, nullptr);
  Rng probe(17);
  auto eval = [&](const Tensor& x, const Tensor& y) {
    return picnn_forward(bp, "e", spec, x, y, Tensor()).scalar();
  };
  for (int trial = 0; trial < 200; ++trial) {
    Tensor x = Tensor::from_row({probe.uniform(-1, 1), probe.uniform(-1, 1)});
    Tensor ya = Tensor::from_row({probe.uniform(-2, 2), probe.uniform(-2, 2)});
    Tensor yb = Tensor::from_row({probe.uniform(-2, 2), probe.uniform(-2, 2)});
    double lam = probe.uniform(0, 1);
    std::vector<double> mixv = {lam * ya.at(0) + (1 - lam) * yb.at(0),
                                lam * ya.at(1) + (1 - lam) * yb.at(1)};
    double mix = eval(x, Tensor::from_row(mixv));
    double chord = lam * eval(x, ya) + (1 - lam) * eval(x, yb);
    CHECK(mix <= chord + 1e-9);
    // nondecreasing: bump one coordinate upward
    Tensor up = Tensor::from_row({ya.at(0) + probe.uniform(0, 1), ya.at(1)});
    CHECK(eval(x, up) >= eval(x, ya) - 1e-9);
  }
}

TEST_CASE("picnn y_free block keeps convexity without monotonicity") {
  ParamSet p;
  Rng rng(5);
  PicnnSpec spec{1, 0, 2, {4, 1}};
  add_picnn_params(p, "e", spec, rng);
  project_constraints(p);
  BoundParams bp = bind_params(p, nullptr);
  Rng probe(23);
  Tensor x = Tensor::from_row({0.4});
  auto eval = [&](const Tensor& y) {
    return picnn_forward(bp, "e", spec, x, Tensor(), y).scalar();
  };
  for (int trial = 0; trial < 200; ++trial) {
    Tensor ya = Tensor::from_row({probe.uniform(-2, 2), probe.uniform(-2, 2)});
    Tensor yb = Tensor::from_row({probe.uniform(-2, 2), probe.uniform(-2, 2)});
    double lam = probe.uniform(0, 1);
    Tensor mix = Tensor::from_row({lam * ya.at(0) + (1 - lam) * yb.at(0),
                                   lam * ya.at(1) + (1 - lam) * yb.at(1)});
    CHECK(eval(mix) <= lam * eval(ya) + (1 - lam) * eval(yb) + 1e-9);
  }
}

TEST_CASE("attention weights are a softmax over the neighbor list per head") {
  Tensor x = Tensor::from_data(3, 2, {0.1, 0.9, -0.3, 0.2, 0.7, -0.5});
  Tensor e = Tensor::from_data(2, 1, {0.25, 0.5});
  Graph g = make_graph(3, {{0, 1}, {1, 2}}, x, e);
  AttnSpec spec{2, 4, 2, 2, 1, 0.2};
  ParamSet p;
  Rng rng(29);
  add_attention_params(p, "a", spec, rng);
  BoundParams bp = bind_params(p, nullptr);
  Tensor w1 = attention_weights(bp, "a", spec, g, 1);
  CHECK(w1.rows == 2);
  CHECK(w1.cols == 2);
  for (int h = 0; h < 2; ++h) {
    double s = w1.at(h, 0) + w1.at(h, 1);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w1.at(h, 0) > 0.0);
  }
  Tensor w0 = attention_weights(bp, "a", spec, g, 0);
  CHECK(w0.cols == 1);
  CHECK(w0.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip restores exact values") {
  ParamSet p;
  p.add("a.W0", Tensor::from_data(2, 2, {0.1, -0.000000123456789, 3e100, 4}));
  p.add("a.b0", Tensor::from_data(1, 2, {-1, 2}));
  std::string path = "/tmp/hogwild_ckpt_test.json";
  save_checkpoint(p, path);

  auto values = load_checkpoint_values(path);
  CHECK(values.size() == 2);
  CHECK(values.at("a.W0").at(1) == -0.000000123456789);
  CHECK(values.at("a.W0").at(2) == 3e100);

  ParamSet q;
  q.add("a.W0", Tensor::zeros(2, 2));
  q.add("a.b0", Tensor::zeros(1, 2));
  load_checkpoint_into(q, path);
  CHECK(q.value("a.W0").values() == p.value("a.W0").values());

  // extra name on disk that the model does not define
  ParamSet missing_param;
  missing_param.add("a.W0", Tensor::zeros(2, 2));
  CHECK_THROWS_AS(load_checkpoint_into(missing_param, path), ConfigError);

  // model defines a name the file lacks
  ParamSet extra_param;
  extra_param.add("a.W0", Tensor::zeros(2, 2));
  extra_param.add("a.b0", Tensor::zeros(1, 2));
  extra_param.add("a.W1", Tensor::zeros(1, 1));
  CHECK_THROWS_AS(load_checkpoint_into(extra_param, path), ConfigError);

  // shape mismatch
  ParamSet wrong_shape;
  wrong_shape.add("a.W0", Tensor::zeros(2, 2));
  wrong_shape.add("a.b0", Tensor::zeros(2, 2));
  CHECK_THROWS_AS(load_checkpoint_into(wrong_shape, path), ConfigError);

  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint_values(path), ConfigError);
}
