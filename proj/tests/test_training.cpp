#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "hogwild/errors.hpp"
#include "hogwild/rng.hpp"
#include "hogwild/training.hpp"

using namespace hogwild;

namespace {

Graph labeled_chain(int n, int classes, const std::vector<double>& labels) {
  std::vector<double> xs(static_cast<size_t>(n) * classes, 0.0);
  xs[0] = 1.0;
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i + 1 < n; ++i) pairs.emplace_back(i, i + 1);
  return make_graph(n, pairs, Tensor::from_data(n, classes, xs), Tensor(),
                    Tensor::from_data(n, 1, labels));
}

ModelConfig tiny_config(ModelKind kind, TaskKind task, int feat_dim, int out_dim) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.feat_dim = feat_dim;
  cfg.out_dim = out_dim;
  cfg.embed_dim = 2;
  cfg.edge_feat_dim = 0;
  if (kind == ModelKind::Gcn) {
    cfg.gcn_width = 4;
    cfg.gcn_layers = 2;
  }
  (void)task;
  return cfg;
}

}  // namespace

TEST_CASE("one-hot expansion") {
  Tensor labels = Tensor::from_data(3, 1, {2, 0, 1});
  Tensor oh = one_hot_targets(labels, 3);
  CHECK(oh.rows == 3);
  CHECK(oh.cols == 3);
  CHECK(oh.at(0, 2) == 1.0);
  CHECK(oh.at(0, 0) == 0.0);
  CHECK(oh.at(1, 0) == 1.0);
  CHECK(oh.at(2, 1) == 1.0);
  CHECK_THROWS_AS(one_hot_targets(labels, 2), UsageError);
}

TEST_CASE("classification loss at zero logits is ln 2") {
  // softplus(0) - 0*y = ln 2 for every entry, any target
  Graph g = labeled_chain(3, 2, {0, 1, 1});
  Tensor zero_logits = Tensor::zeros(3, 2);
  CHECK(task_loss(TaskKind::Chains, g, zero_logits).scalar() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // perfect confident logits drive the loss toward zero
  Tensor confident = Tensor::from_data(3, 2, {40, -40, -40, 40, -40, 40});
  CHECK(task_loss(TaskKind::Chains, g, confident).scalar() < 1e-12);
}

TEST_CASE("regression loss is the mean squared error over entries") {
  Graph g = labeled_chain(2, 1, {3, 5});
  Tensor exact = Tensor::from_data(2, 1, {3, 5});
  CHECK(task_loss(TaskKind::Sum, g, exact).scalar() == 0.0);
  Tensor off = Tensor::from_data(2, 1, {4, 3});
  CHECK(task_loss(TaskKind::Sum, g, off).scalar() == doctest::Approx(2.5));
}

TEST_CASE("coordinate loss vanishes for any isometry of the true layout") {
  // positions translated and rotated leave pairwise distances unchanged
  Tensor pos = Tensor::from_data(3, 2, {0, 0, 0.3, 0, 0.3, 0.25});
  std::vector<std::pair<int, int>> pairs{{0, 1}, {1, 2}, {0, 2}};
  std::vector<double> dists;
  for (auto [i, j] : pairs) {
    double dx = pos.at(i, 0) - pos.at(j, 0), dy = pos.at(i, 1) - pos.at(j, 1);
    dists.push_back(std::sqrt(dx * dx + dy * dy));
  }
  Graph g = make_graph(3, pairs, Tensor::ones(3, 1),
                       Tensor::from_data(3, 1, dists), pos);
  double ct = std::cos(0.7), st = std::sin(0.7);
  std::vector<double> moved;
  for (int i = 0; i < 3; ++i) {
    double x = pos.at(i, 0), y = pos.at(i, 1);
    moved.push_back(ct * x - st * y + 10.0);
    moved.push_back(st * x + ct * y - 4.0);
  }
  CHECK(task_loss(TaskKind::Coordinates, g, Tensor::from_data(3, 2, moved)).scalar() <
        1e-24);
  CHECK(task_loss(TaskKind::Coordinates, g, pos).scalar() < 1e-24);
  // collapsing all nodes leaves the squared edge lengths as residuals, up to
  // the differentiability floor under the distance sqrt
  double collapsed = task_loss(TaskKind::Coordinates, g, Tensor::zeros(3, 2)).scalar();
  double expect = 0.0;
  for (double d : dists) expect += d * d;
  CHECK(collapsed == doctest::Approx(expect / 3.0).epsilon(1e-9));
}

TEST_CASE("coordinate loss stays differentiable at coincident predictions") {
  // a dead readout can map every node to the same point; the gradient there
  // must be finite (zero), not a division by the zero distance
  Tensor pos = Tensor::from_data(3, 2, {0, 0, 0.3, 0, 0.3, 0.25});
  std::vector<std::pair<int, int>> pairs{{0, 1}, {1, 2}, {0, 2}};
  Graph g = make_graph(3, pairs, Tensor::ones(3, 1),
                       Tensor::from_data(3, 1, {0.3, 0.25, 0.39}), pos);
  Tape tape;
  Tensor pred = tape.track(Tensor::zeros(3, 2));
  Tensor loss = task_loss(TaskKind::Coordinates, g, pred);
  Gradients gr = tape.backward(loss);
  Tensor gp = gr.grad(pred);
  for (int i = 0; i < gp.size(); ++i) {
    CHECK(std::isfinite(gp.at(i)));
    CHECK(gp.at(i) == 0.0);
  }
}

TEST_CASE("metrics: error rate for classification, normalized rmse for regression") {
  Graph g = labeled_chain(4, 2, {0, 1, 0, 1});
  MetricAccumulator right(TaskKind::Chains);
  right.add(g, Tensor::from_data(4, 2, {5, -5, -5, 5, 5, -5, -5, 5}));
  CHECK(right.value() == 0.0);
  MetricAccumulator wrong(TaskKind::Chains);
  wrong.add(g, Tensor::from_data(4, 2, {-5, 5, 5, -5, -5, 5, 5, -5}));
  CHECK(wrong.value() == 100.0);
  MetricAccumulator half(TaskKind::Chains);
  half.add(g, Tensor::from_data(4, 2, {5, -5, 5, -5, 5, -5, 5, -5}));
  CHECK(half.value() == 50.0);

  Graph r = labeled_chain(2, 1, {3, 4});
  MetricAccumulator exact(TaskKind::Sum);
  exact.add(r, Tensor::from_data(2, 1, {3, 4}));
  CHECK(exact.value() == 0.0);
  MetricAccumulator constant_zero(TaskKind::Sum);
  constant_zero.add(r, Tensor::zeros(2, 1));
  // RMSE equals RMS of the targets when predicting zero
  CHECK(constant_zero.value() == doctest::Approx(100.0).epsilon(1e-12));

  Graph zeros = labeled_chain(2, 1, {0, 0});
  MetricAccumulator undefined(TaskKind::Sum);
  undefined.add(zeros, Tensor::ones(2, 1));
  CHECK_THROWS_AS(undefined.value(), NumericError);
}

TEST_CASE("adam: zero gradients leave decay only, first step moves by about lr") {
  ParamSet p;
  p.add("w", Tensor::from_data(1, 2, {1.0, -2.0}));
  AdamConfig cfg;
  AdamState state;
  std::map<std::string, Tensor> none;
  adam_step(p, none, state, 0.01, cfg);
  // p *= (1 - lr*wd)
  CHECK(p.value("w").at(0) == doctest::Approx(1.0 * (1 - 0.01 * 1e-4)).epsilon(1e-15));
  CHECK(p.value("w").at(1) == doctest::Approx(-2.0 * (1 - 0.01 * 1e-4)).epsilon(1e-15));

  ParamSet q;
  q.add("w", Tensor::from_data(1, 1, {0.5}));
  AdamConfig nowd;
  nowd.weight_decay = 0.0;
  AdamState s2;
  std::map<std::string, Tensor> grads{{"w", Tensor::from_data(1, 1, {0.25})}};
  adam_step(q, grads, s2, 0.01, nowd);
  // bias corrections cancel on step one: update = lr * g / (|g| + eps')
  CHECK(q.value("w").at(0) == doctest::Approx(0.5 - 0.01).epsilon(1e-6));
  CHECK(s2.step == 1);
  // a second identical gradient keeps moving the same direction
  adam_step(q, grads, s2, 0.01, nowd);
  CHECK(q.value("w").at(0) == doctest::Approx(0.48).epsilon(1e-5));
}

TEST_CASE("learning rate schedule decays every interval") {
  Schedule s;
  CHECK(lr_at(s, 0) == 0.002);
  CHECK(lr_at(s, 199) == 0.002);
  CHECK(lr_at(s, 200) == doctest::Approx(0.002 * 0.98).epsilon(1e-15));
  CHECK(lr_at(s, 399) == doctest::Approx(0.002 * 0.98).epsilon(1e-15));
  CHECK(lr_at(s, 400) == doctest::Approx(0.002 * 0.98 * 0.98).epsilon(1e-15));
}

TEST_CASE("run records round trip through json including the failed flag") {
  RunRecord rec;
  rec.config_hash = "deadbeef00112233";
  rec.fold = 3;
  rec.seed = 77;
  rec.epoch_losses = {1.5, 0.25, 0.125};
  rec.final_metric = 12.5;
  rec.stats.solves = 9;
  rec.stats.iterations = 1234;
  rec.stats.failures = 1;
  std::string path = "/tmp/hogwild_runrec_test.json";
  save_run_record(rec, path);
  RunRecord back = load_run_record(path);
  CHECK(back.config_hash == rec.config_hash);
  CHECK(back.fold == 3);
  CHECK(back.seed == 77);
  CHECK(back.epoch_losses == rec.epoch_losses);
  CHECK(back.final_metric == 12.5);
  CHECK(!back.failed);
  CHECK(back.stats.iterations == 1234);

  rec.failed = true;
  save_run_record(rec, path);
  RunRecord failed = load_run_record(path);
  CHECK(failed.failed);
  std::remove(path.c_str());
}

TEST_CASE("explicit training gradients match finite differences of the loss") {
  ModelConfig cfg = tiny_config(ModelKind::Gcn, TaskKind::Chains, 2, 2);
  Model m = make_model(cfg, 3);
  Graph g = labeled_chain(4, 2, {0, 1, 1, 0});
  SolveConfig solve;
  GraphGrad gg = graph_gradient(m, TaskKind::Chains, g, solve, nullptr, nullptr);
  CHECK(std::isfinite(gg.loss));
  auto loss_now = [&]() {
    return graph_gradient(m, TaskKind::Chains, g, solve, nullptr, nullptr).loss;
  };
  int checked = 0;
  for (const auto& [name, grad] : gg.grads) {
    if (checked >= 3) break;
    int rows = m.params.value(name).rows;
    int cols = m.params.value(name).cols;
    int idx = grad.size() / 3;
    std::vector<double> vals(m.params.value(name).values());
    double base = vals[idx];
    double eps = 1e-6;
    vals[idx] = base + eps;
    m.params.set_value(name, Tensor::from_data(rows, cols, vals));
    double lp = loss_now();
    vals[idx] = base - eps;
    m.params.set_value(name, Tensor::from_data(rows, cols, vals));
    double lm = loss_now();
    vals[idx] = base;
    m.params.set_value(name, Tensor::from_data(rows, cols, vals));
    CHECK(grad.at(idx) == doctest::Approx((lp - lm) / (2 * eps)).epsilon(1e-5));
    ++checked;
  }
}

TEST_CASE("warm starts cut solve iterations without changing the answer") {
  ModelConfig cfg = tiny_config(ModelKind::Ignn, TaskKind::Sum, 1, 1);
  Model m = make_model(cfg, 7);
  Graph g = labeled_chain(5, 1, {2, 2, 2, 2, 2});
  SolveConfig solve;
  solve.tol = 1e-10;
  SolveStats cold_stats;
  GraphGrad cold = graph_gradient(m, TaskKind::Sum, g, solve, nullptr, &cold_stats);
  Tensor warm = Tensor::zeros(g.n, cfg.embed_dim);
  SolveStats s1, s2;
  GraphGrad first = graph_gradient(m, TaskKind::Sum, g, solve, &warm, &s1);
  GraphGrad second = graph_gradient(m, TaskKind::Sum, g, solve, &warm, &s2);
  CHECK(second.loss == doctest::Approx(first.loss).epsilon(1e-9));
  CHECK(s2.iterations < s1.iterations);
  CHECK(std::abs(first.loss - cold.loss) < 1e-8);
  CHECK(cold_stats.solves == 1);
}

TEST_CASE("sync and async inference agree for an implicit model") {
  ModelConfig cfg = tiny_config(ModelKind::Ignn, TaskKind::Sum, 1, 1);
  Model m = make_model(cfg, 11);
  Graph g = labeled_chain(5, 1, {1, 1, 1, 1, 1});
  SolveConfig solve;
  solve.tol = 1e-10;
  SyncResult sync = sync_infer(m, g, solve);
  CHECK(sync.predictions.rows == g.n);
  AsyncConfig ac;
  ac.seed = 4;
  ac.total_updates = 600 * g.n;
  AsyncTrace trace = async_infer(m, g, ac);
  double worst = 0.0;
  for (int i = 0; i < sync.h.size(); ++i)
    worst = std::max(worst, std::abs(trace.final_h.at(i) - sync.h.at(i)));
  CHECK(worst < 1e-7);
}

TEST_CASE("training a tiny ignn improves the loss and records every epoch") {
  ModelConfig cfg = tiny_config(ModelKind::Ignn, TaskKind::Chains, 2, 2);
  Model m = make_model(cfg, 13);
  Dataset ds = gen_chains(2, 6, 21, 2, 0.8);
  TrainConfig tc;
  tc.epochs = 30;
  tc.sentinel = false;
  RunRecord rec = train_single(m, TaskKind::Chains, ds, ds.splits[0], tc, "cafef00d", 13);
  CHECK(!rec.failed);
  CHECK(rec.epoch_losses.size() == 30);
  CHECK(rec.epoch_losses.back() < rec.epoch_losses.front());
  CHECK(rec.config_hash == "cafef00d");
  CHECK(std::isfinite(rec.final_metric));
  CHECK(rec.stats.solves > 0);

  double direct = evaluate(m, TaskKind::Chains, ds, ds.splits[0].test, tc.solve);
  CHECK(direct == doctest::Approx(rec.final_metric).epsilon(1e-12));
}

TEST_CASE("threaded evaluation matches single-threaded") {
  ModelConfig cfg = tiny_config(ModelKind::Gsd, TaskKind::Sum, 1, 1);
  Model m = make_model(cfg, 17);
  Dataset ds = gen_sum(6, 5, 23, 1, 0.8);
  SolveConfig solve;
  std::vector<int> ids{0, 1, 2, 3, 4, 5};
  double one = evaluate(m, TaskKind::Sum, ds, ids, solve, 1);
  double four = evaluate(m, TaskKind::Sum, ds, ids, solve, 4);
  CHECK(one == four);
}

TEST_CASE("gradient drift sentinel passes for a healthy energy model") {
  ModelConfig cfg = tiny_config(ModelKind::EnergyNode, TaskKind::Sum, 1, 1);
  Model m = make_model(cfg, 19);
  Dataset ds = gen_sum(1, 4, 27, 1, 0.8);
  SolveConfig solve;
  solve.tol = 1e-10;
  CHECK_NOTHROW(check_gradient_drift(m, TaskKind::Sum, ds.graphs[0], 500, 1e-3, solve));
  // an absurd tolerance trips the alarm
  CHECK_THROWS_AS(check_gradient_drift(m, TaskKind::Sum, ds.graphs[0], 500, 1e-18, solve),
                  NumericError);
}
