#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hogwild/errors.hpp"
#include "hogwild/training.hpp"

namespace hogwild::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  std::string config;
  std::string task;
  std::string model;
  std::string mode = "sync";
  std::string out = "runs";
  std::string data_dir;
  std::string checkpoint;
  std::string images, labels;
  std::vector<std::string> report_dirs;
  std::uint64_t seed = 0;
  int seeds = 1;
  int folds = 1;
  int epochs = 200;
  int threads = 1;
  int fold = 0;
  // dataset sizes
  int classes = 2;
  int length = 20;
  int count = 0;
  int nodes = 0;
  double radius = 0.5;
  double train_fraction = 0.8;
  int gen_folds = 10;
  // solver
  double sol_tol = 1e-6;
  double sol_alpha = 0.0;
  int sol_max_iters = 100000;
  // async protocol
  int stagger = 4;
  int delay = 3;
  long long total_updates = 0;
  int async_runs = 5;
  int async_samples = 10;
  bool stress = false;
  // training
  double lr = 0.002;
  double decay_rate = 0.98;
  int decay_interval = 200;
  double weight_decay = 1e-4;
  int sentinel_every = 500;
  double sentinel_tol = 1e-3;
  int sentinel_steps = 500;
};

const json* resolve_key(const json& doc, const std::string& dotted) {
  const json* cur = &doc;
  size_t start = 0;
  while (true) {
    size_t dot = dotted.find('.', start);
    std::string part = dotted.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!cur->is_object() || !cur->contains(part)) return nullptr;
    cur = &(*cur)[part];
    if (dot == std::string::npos) return cur;
    start = dot + 1;
  }
}

// config file values fill any option the command line left untouched
struct Overlay {
  std::vector<std::function<void(const json&)>> fills;

  template <typename T>
  CLI::Option* bind(CLI::App* cmd, const std::string& flag, T& var, const std::string& key,
                    const std::string& desc) {
    CLI::Option* opt = cmd->add_option(flag, var, desc);
    fills.push_back([&var, key, opt](const json& doc) {
      if (opt->count() > 0) return;
      if (const json* v = resolve_key(doc, key)) var = v->get<T>();
    });
    return opt;
  }

  CLI::Option* bind_flag(CLI::App* cmd, const std::string& flag, bool& var,
                         const std::string& key, const std::string& desc) {
    CLI::Option* opt = cmd->add_flag(flag, var, desc);
    fills.push_back([&var, key, opt](const json& doc) {
      if (opt->count() > 0) return;
      if (const json* v = resolve_key(doc, key)) var = v->get<bool>();
    });
    return opt;
  }

  void apply(const json& doc) const {
    for (const auto& fill : fills) fill(doc);
  }
};

std::string data_root(const Options& opts) {
  if (const char* env = std::getenv("HOGWILD_GNN_DATA")) {
    if (*env) return env;
  }
  return opts.data_dir.empty() ? "data" : opts.data_dir;
}

std::string dataset_dir(const Options& opts) {
  if (opts.task.empty()) throw ConfigError("a --task is required");
  return (fs::path(data_root(opts)) / opts.task).string();
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json effective_config(const Options& o) {
  json doc;
  doc["task"] = o.task;
  doc["model"] = o.model;
  doc["seed"] = o.seed;
  doc["seeds"] = o.seeds;
  doc["folds"] = o.folds;
  doc["epochs"] = o.epochs;
  doc["solver"] = {{"tol", o.sol_tol}, {"alpha", o.sol_alpha}, {"max_iters", o.sol_max_iters}};
  doc["training"] = {{"lr", o.lr},
                     {"decay_rate", o.decay_rate},
                     {"decay_interval", o.decay_interval},
                     {"weight_decay", o.weight_decay}};
  doc["async"] = {{"stagger", o.stagger},
                  {"delay", o.delay},
                  {"total_updates", o.total_updates},
                  {"runs", o.async_runs},
                  {"samples", o.async_samples}};
  return doc;
}

ModelConfig model_config(const Options& opts, const Dataset& ds) {
  ModelConfig cfg;
  cfg.kind = model_kind_from_string(opts.model);
  cfg.feat_dim = task_feature_dim(ds.spec);
  cfg.out_dim = task_output_dim(ds.spec);
  cfg.edge_feat_dim = 0;
  if (cfg.kind == ModelKind::EnergyEdge || cfg.kind == ModelKind::EnergyAttn) {
    cfg.edge_feat_dim = task_edge_feature_dim(ds.spec.task);
  }
  return cfg;
}

TrainConfig train_config(const Options& opts) {
  TrainConfig cfg;
  cfg.schedule.base = opts.lr;
  cfg.schedule.rate = opts.decay_rate;
  cfg.schedule.interval = opts.decay_interval;
  cfg.epochs = opts.epochs;
  cfg.adam.weight_decay = opts.weight_decay;
  cfg.solve = SolveConfig{opts.sol_alpha, opts.sol_max_iters, opts.sol_tol};
  cfg.sentinel_every = opts.sentinel_every;
  cfg.sentinel_tol = opts.sentinel_tol;
  cfg.sentinel_steps = opts.sentinel_steps;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw UsageError("write failure on " + path.string());
}

std::string run_tag(const Options& opts, int fold, std::uint64_t seed) {
  return opts.model + "_" + opts.task + "_f" + std::to_string(fold) + "_s" + std::to_string(seed);
}

Dataset load_task_dataset(const Options& opts) {
  std::string dir = dataset_dir(opts);
  if (!fs::exists(fs::path(dir) / "meta.json")) {
    throw ConfigError("no dataset at " + dir + " (run gen first or set HOGWILD_GNN_DATA)");
  }
  return load_dataset(dir);
}

int cmd_gen(const Options& opts) {
  DatasetSpec spec;
  spec.task = task_kind_from_string(opts.task);
  spec.seed = opts.seed;
  spec.folds = opts.gen_folds;
  spec.train_fraction = opts.train_fraction;
  spec.classes = opts.classes;
  spec.length = opts.length;
  spec.count = opts.count;
  spec.nodes = opts.nodes;
  spec.radius = opts.radius;
  spec.idx_images = opts.images;
  spec.idx_labels = opts.labels;
  if (spec.task == TaskKind::MnistTerrain && (spec.idx_images.empty() || spec.idx_labels.empty())) {
    throw ConfigError("mnist-terrain needs --images and --labels IDX paths");
  }
  Dataset ds = generate(spec);
  std::string dir = dataset_dir(opts);
  save_dataset(ds, dir);
  long long node_total = 0;
  for (const Graph& g : ds.graphs) node_total += g.n;
  std::cout << "gen: " << ds.graphs.size() << " graphs (" << node_total << " nodes, "
            << ds.splits.size() << " folds) -> " << dir << "\n";
  return 0;
}

int cmd_train(const Options& opts) {
  if (opts.model.empty()) throw ConfigError("train needs a --model");
  Dataset ds = load_task_dataset(opts);
  if (opts.folds < 1 || opts.folds > static_cast<int>(ds.splits.size())) {
    throw ConfigError("train: --folds must lie in [1," + std::to_string(ds.splits.size()) + "]");
  }
  if (opts.seeds < 1) throw ConfigError("train: seeds must be >= 1");
  ModelConfig mcfg = model_config(opts, ds);
  TrainConfig tcfg = train_config(opts);
  std::string hash = hex64(fnv1a64(effective_config(opts).dump()));

  fs::create_directories(fs::path(opts.out) / "records");
  fs::create_directories(fs::path(opts.out) / "checkpoints");
  json manifest = {{"task", opts.task}, {"model", opts.model}, {"config_hash", hash},
                   {"folds", opts.folds}, {"seeds", opts.seeds}};
  write_text(fs::path(opts.out) / "manifest.json", manifest.dump(2) + "\n");

  std::ofstream times(fs::path(opts.out) / "run_times.log", std::ios::app);
  for (int f = 0; f < opts.folds; ++f) {
    for (int s = 0; s < opts.seeds; ++s) {
      std::uint64_t seed = opts.seed + static_cast<std::uint64_t>(s);
      Model m = make_model(mcfg, seed);
      auto t0 = std::chrono::steady_clock::now();
      RunRecord rec = train_single(m, ds.spec.task, ds, ds.splits[f], tcfg, hash, seed);
      double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::string tag = run_tag(opts, f, seed);
      save_run_record(rec, (fs::path(opts.out) / "records" / (tag + ".json")).string());
      save_checkpoint(m.params, (fs::path(opts.out) / "checkpoints" / (tag + ".json")).string());
      times << tag << " wall_time_s=" << secs << "\n";
      std::cout << "train " << tag << ": ";
      if (rec.failed) {
        std::cout << "FAILED\n";
      } else {
        std::cout << "metric " << rec.final_metric << "% after " << rec.epoch_losses.size()
                  << " epochs\n";
      }
    }
  }
  return 0;
}

double metric_over(TaskKind task, const Dataset& ds, const std::vector<int>& ids,
                   const std::function<Tensor(const Graph&)>& predict) {
  MetricAccumulator acc(task);
  for (int id : ids) {
    acc.add(ds.graphs[id], predict(ds.graphs[id]));
  }
  return acc.value();
}

int cmd_eval(const Options& opts) {
  if (opts.model.empty()) throw ConfigError("eval needs a --model");
  if (opts.checkpoint.empty()) throw ConfigError("eval needs a --checkpoint");
  if (opts.mode != "sync" && opts.mode != "async") {
    throw ConfigError("eval: --mode must be sync or async");
  }
  Dataset ds = load_task_dataset(opts);
  if (opts.fold < 0 || opts.fold >= static_cast<int>(ds.splits.size())) {
    throw ConfigError("eval: fold out of range");
  }
  ModelConfig mcfg = model_config(opts, ds);
  Model m = make_model(mcfg, opts.seed);
  load_checkpoint_into(m.params, opts.checkpoint);

  const std::vector<int>& test = ds.splits[opts.fold].test;
  SolveConfig solve{opts.sol_alpha, opts.sol_max_iters, 1e-8};
  fs::create_directories(opts.out);
  json doc;
  doc["task"] = opts.task;
  doc["model"] = opts.model;
  doc["mode"] = opts.mode;
  doc["fold"] = opts.fold;

  if (opts.mode == "sync") {
    double metric = evaluate(m, ds.spec.task, ds, test, solve, opts.threads);
    doc["metric"] = metric;
    std::cout << "eval sync " << opts.model << " on " << opts.task << ": " << metric << "%\n";
  } else {
    std::vector<int> sample(test.begin(),
                            test.begin() + std::min<size_t>(opts.async_samples, test.size()));
    double sync_metric = metric_over(ds.spec.task, ds, sample, [&](const Graph& g) {
      return sync_infer(m, g, solve).predictions;
    });
    doc["sync_metric"] = sync_metric;
    json runs = json::array();
    double mean = 0.0, m2 = 0.0;
    for (int r = 0; r < opts.async_runs; ++r) {
      AsyncConfig acfg;
      acfg.stagger = opts.stagger;
      acfg.delay = opts.delay;
      acfg.total_updates = opts.total_updates;
      acfg.seed = opts.seed + 1000003ULL * static_cast<std::uint64_t>(r);
      acfg.alpha = opts.sol_alpha;
      acfg.stress_threads = opts.stress;
      double metric = metric_over(ds.spec.task, ds, sample, [&](const Graph& g) {
        return async_infer(m, g, acfg).outputs;
      });
      double dev = std::abs(metric - sync_metric);
      runs.push_back({{"seed", acfg.seed}, {"metric", metric}, {"deviation", dev}});
      mean += dev;
    }
    mean /= opts.async_runs;
    for (const json& r : runs) {
      double d = r.at("deviation").get<double>() - mean;
      m2 += d * d;
    }
    double stddev = std::sqrt(m2 / opts.async_runs);
    doc["async_runs"] = runs;
    doc["mean_deviation"] = mean;
    doc["std_deviation"] = stddev;
    std::cout << "eval async " << opts.model << " on " << opts.task << ": sync " << sync_metric
              << "%, deviation " << mean << " +/- " << stddev << " over " << opts.async_runs
              << " runs x " << sample.size() << " graphs\n";
  }
  std::string name = "eval_" + opts.model + "_" + opts.task + "_" + opts.mode + ".json";
  write_text(fs::path(opts.out) / name, doc.dump(2) + "\n");
  return 0;
}

int cmd_report(const Options& opts) {
  struct Row {
    std::vector<double> metrics;
    int failed = 0;
  };
  std::map<std::pair<std::string, std::string>, Row> groups;
  int records = 0;
  for (const std::string& dir : opts.report_dirs) {
    fs::path manifest_path = fs::path(dir) / "manifest.json";
    if (!fs::exists(manifest_path)) throw ConfigError("report: no manifest.json in " + dir);
    std::ifstream in(manifest_path);
    json manifest;
    in >> manifest;
    auto key = std::make_pair(manifest.at("task").get<std::string>(),
                              manifest.at("model").get<std::string>());
    fs::path rec_dir = fs::path(dir) / "records";
    if (fs::exists(rec_dir)) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(rec_dir)) {
        if (entry.path().extension() == ".json") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      for (const fs::path& file : files) {
        RunRecord rec = load_run_record(file.string());
        ++records;
        if (rec.failed) {
          groups[key].failed += 1;
        } else {
          groups[key].metrics.push_back(rec.final_metric);
        }
      }
    }
  }
  if (records == 0) throw ConfigError("report: no run records found");

  std::ostringstream csv, md;
  csv << "task,model,runs,failed,metric_mean,metric_std\n";
  md << "| task | model | runs | failed | metric |\n";
  md << "| --- | --- | --- | --- | --- |\n";
  for (const auto& [key, row] : groups) {
    double mean = 0.0, stddev = 0.0;
    if (!row.metrics.empty()) {
      for (double v : row.metrics) mean += v;
      mean /= static_cast<double>(row.metrics.size());
      for (double v : row.metrics) stddev += (v - mean) * (v - mean);
      stddev = std::sqrt(stddev / static_cast<double>(row.metrics.size()));
    }
    csv << key.first << "," << key.second << "," << row.metrics.size() << "," << row.failed << ","
        << mean << "," << stddev << "\n";
    md << "| " << key.first << " | " << key.second << " | " << row.metrics.size() << " | "
       << row.failed << " | " << mean << " +/- " << stddev << " |\n";
  }
  fs::create_directories(opts.out);
  write_text(fs::path(opts.out) / "report.csv", csv.str());
  write_text(fs::path(opts.out) / "report.md", md.str());
  std::cout << md.str();
  return 0;
}

int dispatch(const Options& opts, const std::string& active) {
  if (active == "gen") return cmd_gen(opts);
  if (active == "train") return cmd_train(opts);
  if (active == "eval") return cmd_eval(opts);
  if (active == "report") return cmd_report(opts);
  throw UsageError("unknown subcommand");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  Options opts;
  Overlay overlay;
  CLI::App app{"hogwild-gnn: implicit vs explicit GNN inference experiments"};
  app.require_subcommand(1);

  CLI::App* gen = app.add_subcommand("gen", "generate a dataset");
  CLI::App* train = app.add_subcommand("train", "train a model on a dataset");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint (sync or hogwild)");
  CLI::App* report = app.add_subcommand("report", "aggregate run records into CSV/Markdown");

  for (CLI::App* cmd : {gen, train, eval}) {
    overlay.bind(cmd, "--config", opts.config, "-", "JSON config file (flags win)");
    overlay.bind(cmd, "--task", opts.task, "task", "task id");
    overlay.bind(cmd, "--seed", opts.seed, "seed", "base RNG seed");
    overlay.bind(cmd, "--data", opts.data_dir, "data_dir",
                 "dataset root (HOGWILD_GNN_DATA overrides)");
    overlay.bind(cmd, "--out", opts.out, "out", "output directory");
  }
  for (CLI::App* cmd : {train, eval}) {
    overlay.bind(cmd, "--model", opts.model, "model", "model id");
    overlay.bind(cmd, "--threads", opts.threads, "threads", "per-graph evaluation threads");
    overlay.bind(cmd, "--tol", opts.sol_tol, "solver.tol", "forward solve tolerance");
    overlay.bind(cmd, "--alpha", opts.sol_alpha, "solver.alpha",
                 "descent step (<=0 picks 1/L)");
    overlay.bind(cmd, "--max-iters", opts.sol_max_iters, "solver.max_iters",
                 "forward solve iteration cap");
  }

  overlay.bind(gen, "--classes,--p", opts.classes, "classes", "chain classes");
  overlay.bind(gen, "--length,--l", opts.length, "length", "chain length");
  overlay.bind(gen, "--count", opts.count, "count", "graph count (0 = task default)");
  overlay.bind(gen, "--nodes", opts.nodes, "nodes", "nodes per graph (0 = task default)");
  overlay.bind(gen, "--radius", opts.radius, "radius", "coordinates edge radius");
  overlay.bind(gen, "--folds", opts.gen_folds, "folds", "split folds to generate");
  overlay.bind(gen, "--train-fraction", opts.train_fraction, "train_fraction",
               "train share per fold");
  overlay.bind(gen, "--images", opts.images, "idx_images", "IDX image file");
  overlay.bind(gen, "--labels", opts.labels, "idx_labels", "IDX label file");

  overlay.bind(train, "--folds", opts.folds, "folds", "folds to train");
  overlay.bind(train, "--seeds", opts.seeds, "seeds", "parameter seeds per fold");
  overlay.bind(train, "--epochs", opts.epochs, "epochs", "training epochs");
  overlay.bind(train, "--lr", opts.lr, "training.lr", "base learning rate");
  overlay.bind(train, "--weight-decay", opts.weight_decay, "training.weight_decay",
               "decoupled weight decay");
  overlay.bind(train, "--decay-rate", opts.decay_rate, "training.decay_rate", "LR decay rate");
  overlay.bind(train, "--decay-interval", opts.decay_interval, "training.decay_interval",
               "epochs per LR decay");
  overlay.bind(train, "--sentinel-every", opts.sentinel_every, "training.sentinel_every",
               "epochs between gradient drift checks (0 disables)");

  overlay.bind(eval, "--mode", opts.mode, "mode", "sync or async");
  overlay.bind(eval, "--checkpoint", opts.checkpoint, "checkpoint", "trained checkpoint path");
  overlay.bind(eval, "--fold", opts.fold, "fold", "fold to evaluate");
  overlay.bind(eval, "--stagger", opts.stagger, "async.stagger", "max ticks between updates (S)");
  overlay.bind(eval, "--delay", opts.delay, "async.delay", "max extra staleness (D)");
  overlay.bind(eval, "--updates", opts.total_updates, "async.total_updates",
               "update budget (0 = 400*n*(S+D))");
  overlay.bind(eval, "--runs", opts.async_runs, "async.runs", "async repetitions");
  overlay.bind(eval, "--samples", opts.async_samples, "async.samples", "test graphs to sample");
  overlay.bind_flag(eval, "--stress-threads", opts.stress, "async.stress_threads",
                    "compute concurrent updates on real threads");

  overlay.bind(report, "--out", opts.out, "out", "output directory");
  report->add_option("dirs", opts.report_dirs, "run directories")->required();

  std::vector<const char*> argv;
  argv.push_back("hogwild-gnn");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (!opts.config.empty()) {
      std::ifstream in(opts.config);
      if (!in) throw ConfigError("cannot open config " + opts.config);
      json doc;
      try {
        in >> doc;
      } catch (const json::exception& e) {
        throw ConfigError("config " + opts.config + ": " + e.what());
      }
      overlay.apply(doc);
    }
    return dispatch(opts, app.get_subcommands().front()->get_name());
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace hogwild::cli
