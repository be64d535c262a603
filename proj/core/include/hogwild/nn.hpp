#pragma once

#include <map>
#include <string>
#include <vector>

#include "hogwild/autodiff.hpp"
#include "hogwild/graph.hpp"
#include "hogwild/rng.hpp"
#include "hogwild/tensor.hpp"

namespace hogwild {

// ---------------------------------------------------------------------------
// Parameter storage.
//
// ParamSet owns values plus projection metadata; optimizers iterate it in name
// order (std::map), which keeps update order deterministic. Forward code never
// reads the ParamSet directly: it first binds the set to a tape (or to none)
// and evaluates against the bound handles, so the same forward functions serve
// plain evaluation and gradient recording.
// ---------------------------------------------------------------------------

enum class ConstraintKind {
  None,
  NonNeg,        // clamp all entries at zero
  InfNormBound,  // rescale so the max absolute row sum stays under `bound`
};

struct Constraint {
  ConstraintKind kind = ConstraintKind::None;
  double bound = 0.0;
};

struct Param {
  Tensor value;
  Constraint constraint;
};

struct ParamSet {
  std::map<std::string, Param> items;

  void add(const std::string& name, Tensor value, Constraint c = {});
  const Tensor& value(const std::string& name) const;
  void set_value(const std::string& name, Tensor value);  // shape-checked
  bool contains(const std::string& name) const { return items.count(name) > 0; }
  size_t size() const { return items.size(); }
};

// Applies every constraint in place. Idempotent; never increases a
// constrained norm.
void project_constraints(ParamSet& params);

// Checkpoint files store {"name": {"shape": [r, c], "data": [...]}} with
// full-precision doubles; constraints are model configuration, not data, so
// they are not serialized.
void save_checkpoint(const ParamSet& params, const std::string& path);
std::map<std::string, Tensor> load_checkpoint_values(const std::string& path);
// Overwrites values in an already-configured ParamSet; missing names or shape
// mismatches raise ConfigError.
void load_checkpoint_into(ParamSet& params, const std::string& path);

struct BoundParams {
  std::map<std::string, Tensor> handles;
  const Tensor& at(const std::string& name) const;
};

// tape == nullptr binds raw values (no gradient recording).
BoundParams bind_params(const ParamSet& params, Tape* tape);

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
Tensor init_uniform(Rng& rng, int rows, int cols, int fan_in);

// ---------------------------------------------------------------------------
// MLP: weights stored (out x in), biases (1 x out); hidden activation applied
// between layers, final layer linear.
// ---------------------------------------------------------------------------

enum class Activation { Relu, Tanh, Softplus, Identity };

struct MlpSpec {
  std::vector<int> dims;  // in, hidden..., out
  Activation hidden = Activation::Relu;
};

// Adds prefix.W0/prefix.b0, prefix.W1/... for each layer.
void add_mlp_params(ParamSet& params, const std::string& prefix, const MlpSpec& spec, Rng& rng);
// x is (batch x in); returns (batch x out).
Tensor mlp_forward(const BoundParams& p, const std::string& prefix, const MlpSpec& spec,
                   const Tensor& x);

// ---------------------------------------------------------------------------
// Partially input-convex network.
//
// Scalar-convex in the convex inputs and additionally nondecreasing in the
// y_mono block; the x block is unrestricted. Realized with a tanh context
// path, softplus hidden activations on the convex path, nonnegative weights
// on the z-to-z and y_mono paths, and ReLU-rectified gates on the z and
// y_mono products (the y_free gate stays unclamped, which preserves convexity
// but not monotonicity). Layer sizes are the z-path widths; the final layer
// is linear.
// ---------------------------------------------------------------------------

struct PicnnSpec {
  int x_dim = 0;       // context input width (>= 1)
  int y_mono_dim = 0;  // convex + nondecreasing inputs
  int y_free_dim = 0;  // convex-only inputs
  std::vector<int> layers;  // z widths, last entry = output width
};

void add_picnn_params(ParamSet& params, const std::string& prefix, const PicnnSpec& spec,
                      Rng& rng);
// Row-vector inputs: x (1 x x_dim), y_mono (1 x y_mono_dim), y_free
// (1 x y_free_dim); empty tensors allowed for zero-width blocks.
Tensor picnn_forward(const BoundParams& p, const std::string& prefix, const PicnnSpec& spec,
                     const Tensor& x, const Tensor& y_mono, const Tensor& y_free);

// ---------------------------------------------------------------------------
// Feature-based graph attention (used by the attention energy variant; scores
// depend on node/edge features only, never on embeddings).
// ---------------------------------------------------------------------------

struct AttnSpec {
  int heads = 1;
  int q = 4;  // projected node feature width
  int s = 2;  // projected edge feature width (ignored when r == 0)
  int p = 0;  // node feature width
  int r = 0;  // edge feature width
  double leaky_slope = 0.2;
};

void add_attention_params(ParamSet& params, const std::string& prefix, const AttnSpec& spec,
                          Rng& rng);
// Returns (heads x |N(i)|); rows are softmax-normalized over the neighbor
// list order of neighbors(g, i). Empty neighborhoods give a (heads x 0)
// tensor.
Tensor attention_weights(const BoundParams& p, const std::string& prefix, const AttnSpec& spec,
                         const Graph& g, int i);

// Numerically stable softmax of a (1 x m) row; m == 0 passes through.
Tensor softmax_row(const Tensor& logits);

}  // namespace hogwild
