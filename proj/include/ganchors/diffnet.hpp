#pragma once

// Minimal reverse-mode differentiable network kernel: dense layers,
// elementwise activations, batch normalization and Adam. Batches are
// row-major Eigen matrices (one sample per row).

#include <Eigen/Dense>
#include <array>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace ganchors::diffnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Batch normalization statistics source.
enum class BnMode { BatchStats, RunningStats };

enum class ActKind { Tanh, Sigmoid, Relu, Identity };

ActKind act_from_name(const std::string& name);
std::string act_name(ActKind k);

struct DenseParams {
  Matrix w;  // out_dim x in_dim
  Vector b;  // out_dim

  int in_dim() const { return static_cast<int>(w.cols()); }
  int out_dim() const { return static_cast<int>(w.rows()); }
};

struct BatchNormState {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  int dim() const { return static_cast<int>(gamma.size()); }
};

struct ActivationLayer {
  ActKind kind = ActKind::Identity;
};

using Layer = std::variant<DenseParams, BatchNormState, ActivationLayer>;

struct Network {
  std::vector<Layer> layers;
  int input_dim = 0;
  std::array<int, 2> output_shape{0, 0};

  int output_dim() const { return output_shape[0] * output_shape[1]; }
};

// ---- single-layer operations ----

Matrix dense_forward(const DenseParams& p, const Matrix& x);

struct DenseGrads {
  Matrix grad_x;
  Matrix grad_w;
  Vector grad_b;
};
DenseGrads dense_backward(const DenseParams& p, const Matrix& x, const Matrix& upstream);

// Statistics actually used by one forward call; required for the matching backward.
struct BnCache {
  Vector mean;
  Vector var;
  BnMode mode = BnMode::BatchStats;
  int batch = 0;
};

// Pure forward: never mutates state. In batch-stats mode the cache carries the
// per-call batch statistics.
Matrix batchnorm_forward(const BatchNormState& s, const Matrix& x, BnMode mode,
                         BnCache* cache = nullptr);

// Folds cached batch statistics into the running estimates. Only meaningful
// after a batch-stats forward; demands exclusive access to the state.
void batchnorm_update_running(BatchNormState& s, const BnCache& cache);

struct BnGrads {
  Matrix grad_x;
  Vector grad_gamma;
  Vector grad_beta;
};
BnGrads batchnorm_backward(const BatchNormState& s, const Matrix& x, const BnCache& cache,
                           const Matrix& upstream);

Matrix activation_forward(ActKind k, const Matrix& x);
Matrix activation_backward(ActKind k, const Matrix& x, const Matrix& upstream);

// ---- whole-network operations ----

// Per-layer inputs cached by a forward pass; backward consumes the trace.
struct ForwardTrace {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<BnCache> bn;     // aligned with layers; unused slots empty
  Matrix output;
  BnMode mode = BnMode::RunningStats;
};

ForwardTrace network_forward(const Network& net, const Matrix& x, BnMode mode);

// Forward that additionally folds batch statistics into running estimates
// (classifier / encoder training only; sampling never takes this path).
ForwardTrace network_forward_update(Network& net, const Matrix& x, BnMode mode);

struct LayerGrads {
  Matrix grad_w;      // dense
  Vector grad_b;      // dense
  Vector grad_gamma;  // batchnorm
  Vector grad_beta;   // batchnorm
};

struct BackwardResult {
  Matrix grad_input;
  std::vector<LayerGrads> layer_grads;  // aligned with layers; empty if skipped
};

BackwardResult network_backward(const Network& net, const ForwardTrace& trace,
                                const Matrix& upstream, bool want_param_grads = true);

// ---- parameter flattening (Adam operates on one flat vector) ----

long param_count(const Network& net);
Vector pack_params(const Network& net);
void unpack_params(Network& net, const Vector& flat);
Vector pack_grads(const Network& net, const std::vector<LayerGrads>& grads);

// ---- Adam ----

struct AdamState {
  Vector m;
  Vector v;
  long t = 0;
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(long n, double lr)
      : m(Vector::Zero(n)), v(Vector::Zero(n)), alpha(lr) {}
};

// Standard bias-corrected update, in place. Throws on non-finite gradients,
// naming the offending tensor.
void adam_step(AdamState& s, Vector& params, const Vector& grads,
               const std::string& name = "params");

// ---- weight-file JSON ----

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace ganchors::diffnet
