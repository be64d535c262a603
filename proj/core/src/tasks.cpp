#include "hogwild/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "hogwild/errors.hpp"
#include "hogwild/rng.hpp"

namespace hogwild {

namespace fs = std::filesystem;
using nlohmann::json;

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "chains") return TaskKind::Chains;
  if (name == "count") return TaskKind::Count;
  if (name == "sum") return TaskKind::Sum;
  if (name == "coordinates") return TaskKind::Coordinates;
  if (name == "mnist-terrain") return TaskKind::MnistTerrain;
  throw ConfigError("unknown task '" + name + "'");
}

std::string task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Chains: return "chains";
    case TaskKind::Count: return "count";
    case TaskKind::Sum: return "sum";
    case TaskKind::Coordinates: return "coordinates";
    case TaskKind::MnistTerrain: return "mnist-terrain";
  }
  throw UsageError("task_kind_name: bad enum value");
}

bool task_is_classification(TaskKind kind) {
  return kind == TaskKind::Chains || kind == TaskKind::MnistTerrain;
}

int task_feature_dim(const DatasetSpec& spec) {
  switch (spec.task) {
    case TaskKind::Chains: return spec.classes;
    case TaskKind::Count: return 3;
    case TaskKind::Sum: return 1;
    case TaskKind::Coordinates: return spec.nodes > 0 ? spec.nodes : 20;
    case TaskKind::MnistTerrain: return 3;
  }
  throw UsageError("task_feature_dim: bad enum value");
}

int task_edge_feature_dim(TaskKind kind) {
  return kind == TaskKind::Coordinates ? 1 : 0;
}

int task_output_dim(const DatasetSpec& spec) {
  switch (spec.task) {
    case TaskKind::Chains: return spec.classes;
    case TaskKind::Count: return 1;
    case TaskKind::Sum: return 1;
    case TaskKind::Coordinates: return 2;
    case TaskKind::MnistTerrain: return 2;
  }
  throw UsageError("task_output_dim: bad enum value");
}

namespace {

std::vector<std::pair<int, int>> chain_pairs(int n) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(n > 0 ? n - 1 : 0);
  for (int i = 0; i + 1 < n; ++i) pairs.emplace_back(i, i + 1);
  return pairs;
}

Tensor column(const std::vector<double>& v) {
  return Tensor::from_data(static_cast<int>(v.size()), 1, v);
}

bool connected(int n, const std::vector<std::pair<int, int>>& pairs) {
  if (n <= 1) return true;
  std::vector<std::vector<int>> adj(n);
  for (auto [a, b] : pairs) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int w : adj[v]) {
      if (!seen[w]) {
        seen[w] = 1;
        ++reached;
        stack.push_back(w);
      }
    }
  }
  return reached == n;
}

std::uint64_t split_seed(std::uint64_t seed) { return seed ^ 0x73706c6974ULL; }

}  // namespace

Dataset gen_chains(int classes, int length, std::uint64_t seed, int folds,
                   double train_fraction) {
  if (classes < 2) throw UsageError("gen_chains: need at least 2 classes");
  if (length < 2) throw UsageError("gen_chains: need length >= 2");
  Dataset ds;
  ds.spec.task = TaskKind::Chains;
  ds.spec.seed = seed;
  ds.spec.folds = folds;
  ds.spec.train_fraction = train_fraction;
  ds.spec.classes = classes;
  ds.spec.length = length;
  for (int k = 0; k < classes; ++k) {
    std::vector<double> data(static_cast<size_t>(length) * classes, 0.0);
    data[k] = 1.0;
    Tensor x = Tensor::from_data(length, classes, data);
    Tensor y = Tensor::full(length, 1, static_cast<double>(k));
    ds.graphs.push_back(make_graph(length, chain_pairs(length), x, Tensor(), y));
  }
  ds.splits = make_splits(static_cast<int>(ds.graphs.size()), folds, train_fraction,
                          split_seed(seed));
  return ds;
}

Dataset gen_count(std::uint64_t seed, int folds, double train_fraction) {
  Dataset ds;
  ds.spec.task = TaskKind::Count;
  ds.spec.seed = seed;
  ds.spec.folds = folds;
  ds.spec.train_fraction = train_fraction;
  for (int n = 1; n <= 50; ++n) {
    std::vector<double> x(static_cast<size_t>(n) * 3, 0.0);
    for (int i = 0; i < n; ++i) {
      int degree = (n == 1) ? 0 : ((i == 0 || i == n - 1) ? 1 : 2);
      x[static_cast<size_t>(i) * 3 + degree] = 1.0;
    }
    Tensor y = Tensor::full(n, 1, static_cast<double>(n));
    ds.graphs.push_back(
        make_graph(n, chain_pairs(n), Tensor::from_data(n, 3, x), Tensor(), y));
  }
  ds.splits = make_splits(static_cast<int>(ds.graphs.size()), folds, train_fraction,
                          split_seed(seed));
  return ds;
}

Dataset gen_sum(int count, int nodes, std::uint64_t seed, int folds, double train_fraction) {
  if (count <= 0) count = 2000;
  if (nodes <= 0) nodes = 50;
  Dataset ds;
  ds.spec.task = TaskKind::Sum;
  ds.spec.seed = seed;
  ds.spec.folds = folds;
  ds.spec.train_fraction = train_fraction;
  ds.spec.count = count;
  ds.spec.nodes = nodes;
  Rng rng(seed);
  for (int g = 0; g < count; ++g) {
    std::vector<double> x(nodes);
    double total = 0.0;
    for (int i = 0; i < nodes; ++i) {
      x[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      total += x[i];
    }
    Tensor y = Tensor::full(nodes, 1, total);
    ds.graphs.push_back(make_graph(nodes, chain_pairs(nodes), column(x), Tensor(), y));
  }
  ds.splits = make_splits(count, folds, train_fraction, split_seed(seed));
  return ds;
}

Dataset gen_coordinates(int count, int nodes, double radius, std::uint64_t seed, int folds,
                        double train_fraction) {
  if (count <= 0) count = 1500;
  if (nodes <= 0) nodes = 20;
  if (radius <= 0.0) throw UsageError("gen_coordinates: radius must be positive");
  Dataset ds;
  ds.spec.task = TaskKind::Coordinates;
  ds.spec.seed = seed;
  ds.spec.folds = folds;
  ds.spec.train_fraction = train_fraction;
  ds.spec.count = count;
  ds.spec.nodes = nodes;
  ds.spec.radius = radius;
  Rng rng(seed);
  for (int g = 0; g < count; ++g) {
    std::vector<double> pos;
    std::vector<std::pair<int, int>> pairs;
    std::vector<double> dists;
    // relative localization is ill-posed across components: resample until
    // the radius graph is connected
    while (true) {
      pos.assign(static_cast<size_t>(nodes) * 2, 0.0);
      for (int i = 0; i < nodes; ++i) {
        pos[static_cast<size_t>(i) * 2] = rng.uniform();
        pos[static_cast<size_t>(i) * 2 + 1] = rng.uniform();
      }
      pairs.clear();
      dists.clear();
      for (int i = 0; i < nodes; ++i) {
        for (int j = i + 1; j < nodes; ++j) {
          double dx = pos[static_cast<size_t>(i) * 2] - pos[static_cast<size_t>(j) * 2];
          double dy = pos[static_cast<size_t>(i) * 2 + 1] - pos[static_cast<size_t>(j) * 2 + 1];
          double d = std::sqrt(dx * dx + dy * dy);
          if (d <= radius) {
            pairs.emplace_back(i, j);
            dists.push_back(d);
          }
        }
      }
      if (connected(nodes, pairs)) break;
    }
    std::vector<double> x(static_cast<size_t>(nodes) * nodes, 0.0);
    for (int i = 0; i < nodes; ++i) x[static_cast<size_t>(i) * nodes + i] = 1.0;
    ds.graphs.push_back(make_graph(nodes, pairs, Tensor::from_data(nodes, nodes, x),
                                   column(dists), Tensor::from_data(nodes, 2, pos)));
  }
  ds.splits = make_splits(count, folds, train_fraction, split_seed(seed));
  return ds;
}

IdxArray parse_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("parse_idx: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 4) {
    throw ConfigError("parse_idx: " + path + ": truncated header at byte offset 0 (" +
                      std::to_string(bytes.size()) + " bytes total)");
  }
  if (bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08) {
    throw ConfigError("parse_idx: " + path + ": bad magic at byte offset 0 (want 00 00 08 ..)");
  }
  int ndims = bytes[3];
  if (ndims < 1) throw ConfigError("parse_idx: " + path + ": zero dimensions at byte offset 3");
  size_t offset = 4;
  IdxArray out;
  std::uint64_t total = 1;
  for (int d = 0; d < ndims; ++d) {
    if (offset + 4 > bytes.size()) {
      throw ConfigError("parse_idx: " + path + ": truncated dimension header at byte offset " +
                        std::to_string(offset));
    }
    std::uint32_t size = (std::uint32_t(bytes[offset]) << 24) |
                         (std::uint32_t(bytes[offset + 1]) << 16) |
                         (std::uint32_t(bytes[offset + 2]) << 8) |
                         std::uint32_t(bytes[offset + 3]);
    offset += 4;
    out.dims.push_back(static_cast<int>(size));
    total *= size;
  }
  if (bytes.size() - offset < total) {
    throw ConfigError("parse_idx: " + path + ": truncated payload at byte offset " +
                      std::to_string(bytes.size()) + " (need " +
                      std::to_string(offset + total) + " bytes)");
  }
  if (bytes.size() - offset > total) {
    throw ConfigError("parse_idx: " + path + ": trailing bytes after payload at byte offset " +
                      std::to_string(offset + total));
  }
  out.data.assign(bytes.begin() + static_cast<long>(offset), bytes.end());
  return out;
}

std::vector<double> downsample_image(const std::uint8_t* pixels, int src, int dst) {
  // box filter: each target cell averages the source pixels it overlaps,
  // weighted by the overlap area, so fractional cell boundaries are exact
  std::vector<double> out(static_cast<size_t>(dst) * dst, 0.0);
  double scale = static_cast<double>(src) / dst;
  for (int r = 0; r < dst; ++r) {
    double r0 = r * scale, r1 = (r + 1) * scale;
    for (int c = 0; c < dst; ++c) {
      double c0 = c * scale, c1 = (c + 1) * scale;
      double acc = 0.0;
      for (int i = static_cast<int>(std::floor(r0)); i < src && i < r1; ++i) {
        double wr = std::min<double>(i + 1, r1) - std::max<double>(i, r0);
        if (wr <= 0) continue;
        for (int j = static_cast<int>(std::floor(c0)); j < src && j < c1; ++j) {
          double wc = std::min<double>(j + 1, c1) - std::max<double>(j, c0);
          if (wc <= 0) continue;
          acc += wr * wc * pixels[static_cast<size_t>(i) * src + j];
        }
      }
      out[static_cast<size_t>(r) * dst + c] = acc / (scale * scale * 255.0);
    }
  }
  return out;
}

Dataset gen_mnist_terrain(const std::string& idx_images_path, const std::string& idx_labels_path,
                          int count, std::uint64_t seed, int folds, double train_fraction) {
  IdxArray images = parse_idx(idx_images_path);
  IdxArray labels = parse_idx(idx_labels_path);
  if (images.dims.size() != 3 || images.dims[1] != 28 || images.dims[2] != 28) {
    throw ConfigError("gen_mnist_terrain: images must have dims (N,28,28)");
  }
  if (labels.dims.size() != 1 || labels.dims[0] != images.dims[0]) {
    throw ConfigError("gen_mnist_terrain: labels must have dims (N) matching the images");
  }
  Dataset ds;
  ds.spec.task = TaskKind::MnistTerrain;
  ds.spec.seed = seed;
  ds.spec.folds = folds;
  ds.spec.train_fraction = train_fraction;
  ds.spec.count = count;
  ds.spec.idx_images = idx_images_path;
  ds.spec.idx_labels = idx_labels_path;
  Rng rng(seed);
  const int agents = 10, side = 10, reach = 5;
  for (int img = 0; img < images.dims[0]; ++img) {
    if (labels.data[img] > 1) continue;  // binary task: keep 0/1 images only
    if (count > 0 && static_cast<int>(ds.graphs.size()) >= count) break;
    std::vector<double> terrain =
        downsample_image(images.data.data() + static_cast<size_t>(img) * 28 * 28, 28, side);
    std::vector<double> x(static_cast<size_t>(agents) * 3);
    std::vector<int> rows(agents), cols(agents);
    for (int a = 0; a < agents; ++a) {
      rows[a] = static_cast<int>(rng.uniform_int(0, side - 1));
      cols[a] = static_cast<int>(rng.uniform_int(0, side - 1));
      x[static_cast<size_t>(a) * 3] = rows[a];
      x[static_cast<size_t>(a) * 3 + 1] = cols[a];
      x[static_cast<size_t>(a) * 3 + 2] = terrain[static_cast<size_t>(rows[a]) * side + cols[a]];
    }
    std::vector<std::pair<int, int>> pairs;
    for (int a = 0; a < agents; ++a) {
      for (int b = a + 1; b < agents; ++b) {
        double dr = rows[a] - rows[b], dc = cols[a] - cols[b];
        if (std::sqrt(dr * dr + dc * dc) <= reach) pairs.emplace_back(a, b);
      }
    }
    Tensor y = Tensor::full(agents, 1, static_cast<double>(labels.data[img]));
    ds.graphs.push_back(make_graph(agents, pairs, Tensor::from_data(agents, 3, x), Tensor(), y));
  }
  if (ds.graphs.empty()) throw ConfigError("gen_mnist_terrain: no 0/1-labelled images found");
  ds.splits = make_splits(static_cast<int>(ds.graphs.size()), folds, train_fraction,
                          split_seed(seed));
  return ds;
}

Dataset generate(const DatasetSpec& spec) {
  switch (spec.task) {
    case TaskKind::Chains:
      return gen_chains(spec.classes, spec.length, spec.seed, spec.folds, spec.train_fraction);
    case TaskKind::Count: return gen_count(spec.seed, spec.folds, spec.train_fraction);
    case TaskKind::Sum:
      return gen_sum(spec.count, spec.nodes, spec.seed, spec.folds, spec.train_fraction);
    case TaskKind::Coordinates:
      return gen_coordinates(spec.count, spec.nodes, spec.radius, spec.seed, spec.folds,
                             spec.train_fraction);
    case TaskKind::MnistTerrain:
      return gen_mnist_terrain(spec.idx_images, spec.idx_labels, spec.count, spec.seed,
                               spec.folds, spec.train_fraction);
  }
  throw UsageError("generate: bad task enum value");
}

std::vector<SplitManifest> make_splits(int n_graphs, int folds, double train_fraction,
                                       std::uint64_t seed) {
  if (n_graphs < 1) throw UsageError("make_splits: need at least one graph");
  if (folds < 1) throw UsageError("make_splits: need at least one fold");
  if (!(train_fraction > 0.0 && train_fraction < 1.0) && n_graphs >= 4) {
    throw UsageError("make_splits: train fraction must lie in (0,1)");
  }
  std::vector<SplitManifest> splits(folds);
  if (n_graphs < 4) {
    // tiny fixed datasets (e.g. one chain per class) are used transductively
    std::vector<int> all(n_graphs);
    std::iota(all.begin(), all.end(), 0);
    for (int f = 0; f < folds; ++f) splits[f] = SplitManifest{f, all, all};
    return splits;
  }
  Rng rng(seed);
  int n_train = static_cast<int>(std::lround(train_fraction * n_graphs));
  n_train = std::clamp(n_train, 1, n_graphs - 1);
  std::vector<int> perm(n_graphs);
  for (int f = 0; f < folds; ++f) {
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n_graphs - 1; i > 0; --i) {
      int j = static_cast<int>(rng.uniform_int(0, i));
      std::swap(perm[i], perm[j]);
    }
    splits[f].fold = f;
    splits[f].train.assign(perm.begin(), perm.begin() + n_train);
    splits[f].test.assign(perm.begin() + n_train, perm.end());
    std::sort(splits[f].train.begin(), splits[f].train.end());
    std::sort(splits[f].test.begin(), splits[f].test.end());
  }
  return splits;
}

namespace {

std::string graph_file(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d.json", id);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw UsageError("write failure on " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return doc;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::path root(dir);
  fs::create_directories(root / "graphs");
  fs::create_directories(root / "splits");
  json meta;
  meta["task"] = task_kind_name(ds.spec.task);
  meta["seed"] = ds.spec.seed;
  meta["folds"] = ds.spec.folds;
  meta["train_fraction"] = ds.spec.train_fraction;
  meta["n_graphs"] = ds.graphs.size();
  json params;
  params["classes"] = ds.spec.classes;
  params["length"] = ds.spec.length;
  params["count"] = ds.spec.count;
  params["nodes"] = ds.spec.nodes;
  params["radius"] = ds.spec.radius;
  if (!ds.spec.idx_images.empty()) params["idx_images"] = ds.spec.idx_images;
  if (!ds.spec.idx_labels.empty()) params["idx_labels"] = ds.spec.idx_labels;
  meta["params"] = std::move(params);
  write_text(root / "meta.json", meta.dump(2) + "\n");
  for (size_t i = 0; i < ds.graphs.size(); ++i) {
    save_graph_json(ds.graphs[i], (root / "graphs" / graph_file(static_cast<int>(i))).string());
  }
  for (const SplitManifest& split : ds.splits) {
    json doc;
    doc["fold"] = split.fold;
    doc["train"] = split.train;
    doc["test"] = split.test;
    write_text(root / "splits" / (std::to_string(split.fold) + ".json"), doc.dump(2) + "\n");
  }
}

Dataset load_dataset(const std::string& dir) {
  fs::path root(dir);
  json meta = read_json(root / "meta.json");
  Dataset ds;
  try {
    ds.spec.task = task_kind_from_string(meta.at("task").get<std::string>());
    ds.spec.seed = meta.at("seed").get<std::uint64_t>();
    ds.spec.folds = meta.at("folds").get<int>();
    ds.spec.train_fraction = meta.at("train_fraction").get<double>();
    const json& params = meta.at("params");
    ds.spec.classes = params.at("classes").get<int>();
    ds.spec.length = params.at("length").get<int>();
    ds.spec.count = params.at("count").get<int>();
    ds.spec.nodes = params.at("nodes").get<int>();
    ds.spec.radius = params.at("radius").get<double>();
    if (params.contains("idx_images")) ds.spec.idx_images = params["idx_images"].get<std::string>();
    if (params.contains("idx_labels")) ds.spec.idx_labels = params["idx_labels"].get<std::string>();
    int n_graphs = meta.at("n_graphs").get<int>();
    ds.graphs.reserve(n_graphs);
    for (int i = 0; i < n_graphs; ++i) {
      ds.graphs.push_back(load_graph_json((root / "graphs" / graph_file(i)).string()));
    }
    for (int f = 0; f < ds.spec.folds; ++f) {
      json doc = read_json(root / "splits" / (std::to_string(f) + ".json"));
      SplitManifest split;
      split.fold = doc.at("fold").get<int>();
      split.train = doc.at("train").get<std::vector<int>>();
      split.test = doc.at("test").get<std::vector<int>>();
      for (int id : split.train) {
        if (id < 0 || id >= n_graphs) throw ConfigError("split references unknown graph id");
      }
      for (int id : split.test) {
        if (id < 0 || id >= n_graphs) throw ConfigError("split references unknown graph id");
      }
      ds.splits.push_back(std::move(split));
    }
  } catch (const json::exception& e) {
    throw ConfigError("load_dataset: " + std::string(e.what()));
  }
  return ds;
}

}  // namespace hogwild
