#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "flowcal/embedding_store.hpp"
#include "flowcal/numerics.hpp"

// Invertible calibration flow.
//
// Orientation: the generative map f sends a standard-Gaussian latent z to an
// observed embedding u. Every layer is stored in the *encoding* direction
// (u -> z), and a layer's "forward" means that direction, so composing layer
// forwards in order yields f^-1. Log-determinants reported by layer forwards
// are contributions to log|det d f^-1(u) / du|.
//
// A block is actnorm -> fixed permutation -> additive coupling; a model stacks
// levels * depth blocks with no factor-out.

namespace flowcal {

enum class Direction { forward, inverse };

enum class CouplingKind : std::uint32_t {
  dense = 0,   // three fully-connected maps, tanh, residual around the middle one
  conv1d = 1,  // two 1-D convolutions (kernel 3, same padding) + dense readout
};

struct FlowConfig {
  Index levels = 2;
  Index depth = 3;
  Index width = 32;
  CouplingKind coupling = CouplingKind::dense;

  Index blocks() const { return levels * depth; }
};

// y = scale * x + bias, per dimension.
struct ActNorm {
  Vector scale;
  Vector bias;
  bool initialized = false;

  static ActNorm identity(Index dim);
};

// y[i] = x[perm[i]].
struct Permutation {
  std::vector<Index> perm;
  std::vector<Index> inverse;

  static Permutation from(std::vector<Index> perm);
  static Permutation random(Index dim, Rng& rng);
};

// Shift network g of an additive coupling, mapping the first `in_dim`
// coordinates to a shift of the remaining `out_dim`.
//
// dense:  h1 = tanh(W1 x + b1); h2 = h1 + tanh(W2 h1 + b2); g = W3 h2 + b3
//         W1: width x in, W2: width x width, W3: out x width
// conv1d: x is a 1-channel signal of length in_dim.
//         H1 = tanh(conv(x; W1) + b1)      W1: width x 3
//         H2 = H1 + tanh(conv(H1; W2) + b2) W2: width x (3 * width), column = tap * width + channel
//         g  = W3 vec(H2) + b3              W3: out x (in * width), vec index = position * width + channel
//
// W3 and b3 start at zero so g == 0 at construction.
struct CouplingNet {
  CouplingKind kind = CouplingKind::dense;
  Index in_dim = 0;
  Index out_dim = 0;
  Index width = 0;
  Matrix w1, w2, w3;
  Vector b1, b2, b3;

  static CouplingNet make(CouplingKind kind, Index in_dim, Index out_dim, Index width, Rng& rng);

  // Evaluate g on a batch: rows of `x` (n x in_dim) -> rows of result (n x out_dim).
  Matrix operator()(const Matrix& x) const;
  Vector operator()(const Vector& x) const;

  Index parameter_count() const;
};

struct AdditiveCoupling {
  Index split = 0;  // d = floor(D / 2)
  CouplingNet net;
};

struct FlowBlock {
  ActNorm actnorm;
  Permutation permutation;
  AdditiveCoupling coupling;
};

struct FlowModel {
  Index dim = 0;
  FlowConfig config;
  std::uint64_t seed = 0;
  std::vector<FlowBlock> blocks;

  bool initialized() const;
};

// Permutations and hidden weights are drawn from `seed`; actnorms are left
// uninitialized and couplings are exact identities.
FlowModel make_flow(Index dim, const FlowConfig& config, std::uint64_t seed);

// ---- per-layer operations -------------------------------------------------

// y_{1:d} = x_{1:d}, y_{d+1:D} = x_{d+1:D} + g(x_{1:d}); log-det is zero.
template <typename Shift>
Vector coupling_forward(const Vector& x, Index split, const Shift& g) {
  Vector y = x;
  y.tail(x.size() - split) += g(Vector(x.head(split)));
  return y;
}

template <typename Shift>
Vector coupling_inverse(const Vector& y, Index split, const Shift& g) {
  Vector x = y;
  x.tail(y.size() - split) -= g(Vector(y.head(split)));
  return x;
}

Vector coupling_forward(const Vector& x, const AdditiveCoupling& layer);
Vector coupling_inverse(const Vector& y, const AdditiveCoupling& layer);

// Returns (output, log-det contribution). Forward: s*x + t, +sum log|s|.
// Inverse: (y - t) / s, -sum log|s|.
std::pair<Vector, double> actnorm_apply(const Vector& x, const ActNorm& layer, Direction dir);

// Data-dependent init: outputs on `batch` get per-dimension mean 0 and
// population variance 1.
void actnorm_init(const Matrix& batch, ActNorm& layer);

Vector permute(const Vector& x, const Permutation& p, Direction dir);

// ---- whole-model operations -----------------------------------------------

struct FlowResult {
  Vector value;
  double logdet = 0.0;
};

// z = f^-1(u) and log|det d f^-1 / du|.
FlowResult flow_inverse(const Vector& u, const FlowModel& model);
// u = f(z) and log|det d f / dz|.
FlowResult flow_forward(const Vector& z, const FlowModel& model);

// Row-wise f^-1 on a batch; logdet is shared by every row (volume change
// comes from actnorm only).
struct BatchEncoding {
  Matrix latent;
  double logdet = 0.0;
};
BatchEncoding encode(const Matrix& batch, const FlowModel& model);
Matrix decode(const Matrix& latent, const FlowModel& model);

// Runs actnorm_init block by block, propagating `data` through each block.
void initialize_actnorms(FlowModel& model, const Matrix& data);

// Mean negative log-likelihood of the rows of `batch` under the flow with a
// standard-Gaussian base density.
double nll(const Matrix& batch, const FlowModel& model);

struct NllGradient {
  double nll = 0.0;
  Vector gradient;  // laid out like pack_parameters()
};
NllGradient grad_nll(const Matrix& batch, const FlowModel& model);

// Flat parameter view. Order per block: actnorm scale, actnorm bias, then
// W1, b1, W2, b2, W3, b3 (Eigen column-major element order).
Index parameter_count(const FlowModel& model);
Vector pack_parameters(const FlowModel& model);
void unpack_parameters(FlowModel& model, const Vector& params);

// ---- training -------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-3;
  double epochs = 1.0;  // fractional epochs allowed
  Index batch_size = 256;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 100.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  FlowModel model;
  std::vector<double> step_nll;  // batch nll before each update
  double initial_nll = 0.0;      // full data, after actnorm init
  double final_nll = 0.0;
};

// Optional per-step observer (step index, batch nll).
using StepCallback = std::function<void(Index, double)>;

TrainResult train_flow(const Matrix& data, const FlowConfig& flow_config,
                       const TrainConfig& train_config, const StepCallback& on_step = {});

// Row i of the result is f^-1(row i of e). Rows are encoded in fixed-size
// chunks shared among `threads` workers; the output does not depend on it.
EmbeddingMatrix transform(const EmbeddingMatrix& e, const FlowModel& model, unsigned threads = 1);

// ---- serialization (layout in docs/model_format.md) -----------------------

inline constexpr std::uint32_t kFlowFormatVersion = 1;

void save_model(const std::filesystem::path& path, const FlowModel& model);
FlowModel load_model(const std::filesystem::path& path);

// "step<TAB>nll" per line, 0-based steps.
void save_training_log(const std::filesystem::path& path, const std::vector<double>& step_nll);

}  // namespace flowcal
