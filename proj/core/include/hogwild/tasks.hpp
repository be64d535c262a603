#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hogwild/graph.hpp"

namespace hogwild {

// Synthetic node-level tasks plus the MNIST-terrain ingestion pipeline.
// Generators are deterministic under DatasetSpec::seed; saving and
// regenerating a dataset produces byte-identical files.

enum class TaskKind { Chains, Count, Sum, Coordinates, MnistTerrain };

TaskKind task_kind_from_string(const std::string& name);
std::string task_kind_name(TaskKind kind);

struct DatasetSpec {
  TaskKind task = TaskKind::Chains;
  std::uint64_t seed = 0;
  int folds = 10;
  double train_fraction = 0.8;
  // size parameters; a zero falls back to the task default
  int classes = 2;     // chains
  int length = 100;    // chains
  int count = 0;       // sum / coordinates / terrain graph count
  int nodes = 0;       // sum / coordinates nodes per graph
  double radius = 0.5;  // coordinates edge threshold
  std::string idx_images;  // terrain inputs
  std::string idx_labels;
};

// Train/test assignment for one fold. Within a fold the two sides are
// disjoint and together cover every graph id (except the tiny-dataset
// transductive case, where both sides hold all graphs).
struct SplitManifest {
  int fold = 0;
  std::vector<int> train;
  std::vector<int> test;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Graph> graphs;
  std::vector<SplitManifest> splits;
};

// Task metadata consumed by model construction and the loss layer.
bool task_is_classification(TaskKind kind);
int task_feature_dim(const DatasetSpec& spec);
int task_edge_feature_dim(TaskKind kind);
int task_output_dim(const DatasetSpec& spec);  // readout width J

// p chain graphs of length l; X[0, class] = 1, zeros elsewhere; every node's
// target is the class index.
Dataset gen_chains(int classes, int length, std::uint64_t seed, int folds = 10,
                   double train_fraction = 0.8);

// 50 chains with 1..50 nodes, degree one-hot features (width 3), target = n.
Dataset gen_count(std::uint64_t seed, int folds = 10, double train_fraction = 0.8);

// Chains with i.i.d. Bernoulli(1/2) scalar features; target = feature sum.
Dataset gen_sum(int count, int nodes, std::uint64_t seed, int folds = 10,
                double train_fraction = 0.8);

// Points uniform in the unit square, edge iff distance <= radius (layouts
// resampled until connected), one-hot id features, distance edge features,
// targets = true positions (reference only; the loss is edge-relative).
Dataset gen_coordinates(int count, int nodes, double radius, std::uint64_t seed,
                        int folds = 10, double train_fraction = 0.8);

// Per image with label 0 or 1: area-average the 28x28 image to 10x10, drop 10
// agents on random integer pixels, feature = (row, col, intensity in [0,1]),
// edge iff pixel distance <= 5, target = image label. count caps the number
// of retained images (0 = all).
Dataset gen_mnist_terrain(const std::string& idx_images_path, const std::string& idx_labels_path,
                          int count, std::uint64_t seed, int folds = 10,
                          double train_fraction = 0.8);

Dataset generate(const DatasetSpec& spec);

// Raw IDX container: 0x00000803 (byte tensors, e.g. images) or 0x00000801
// (byte vectors, e.g. labels), big-endian dimension sizes, unsigned bytes.
struct IdxArray {
  std::vector<int> dims;
  std::vector<std::uint8_t> data;
};

IdxArray parse_idx(const std::string& path);

// 28x28 -> 10x10 box-filter downsample of byte intensities, scaled to [0,1].
std::vector<double> downsample_image(const std::uint8_t* pixels, int src, int dst);

std::vector<SplitManifest> make_splits(int n_graphs, int folds, double train_fraction,
                                       std::uint64_t seed);

// Directory layout: graphs/<id>.json, splits/<fold>.json, meta.json.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace hogwild
