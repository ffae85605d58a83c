#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
// A Tape records the forward computation of one example; backward() walks it in
// reverse and accumulates gradients into the Parameters it touched.

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace affect::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

struct Parameter {
  Parameter(std::string name, Matrix value);

  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

using ParameterRefs = std::vector<Parameter*>;

std::size_t parameter_count(const ParameterRefs& params);
std::vector<double> flatten(const ParameterRefs& params);
void unflatten(const ParameterRefs& params, std::span<const double> flat);
std::vector<double> flatten_grads(const ParameterRefs& params);
void zero_grads(const ParameterRefs& params);
// FNV-1a over the raw parameter bytes.
std::uint64_t checksum(const ParameterRefs& params);

// Initialisers.
Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);
Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  // A non-recording tape evaluates values only (inference mode).
  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }

  bool recording() const { return record_; }

  Var constant(Matrix value);
  Var parameter(Parameter& p);

  const Matrix& value(Var v) const { return value_of(v.id); }
  double scalar(Var v) const { return value_of(v.id)(0, 0); }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  // Gradient of the last backward() root with respect to v (zeros if untouched).
  Matrix grad(Var v) const;

  // Seeds d(root)/d(root) = seed (root must be 1x1) and propagates.
  void backward(Var root, double seed = 1.0);

  // For op implementers.
  Var push(Matrix value, bool needs_grad, Backward backward);
  Matrix& grad_ref(std::uint32_t id);
  const Matrix& value_of(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.external != nullptr ? *n.external : n.value;
  }
  bool has_grad(std::uint32_t id) const { return nodes_[id].grad.size() != 0; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    // Parameters are referenced in place rather than copied.
    const Matrix* external = nullptr;
    Matrix grad;
    bool needs_grad = false;
    Backward backward;
  };
  bool record_;
  std::vector<Node> nodes_;
};

// Per-forward settings shared by every layer.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
};

// Elementwise and linear-algebra ops. Shapes follow Eigen conventions.
Var add(Tape& t, Var a, Var b);
Var add_row(Tape& t, Var a, Var row);  // a (n x d) + row (1 x d) broadcast
Var matmul(Tape& t, Var a, Var b);
Var linear(Tape& t, Var x, Var weight, Var bias);  // x W + b
Var scale(Tape& t, Var a, double s);
Var gelu(Tape& t, Var a);
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);
Var dropout(Tape& t, Var a, const ForwardContext& ctx);

// Scaled dot-product attention split over `heads` column blocks of q, k, v.
// When `attention` is non-null it receives the per-head (n x n) weights.
Var multi_head_attention(Tape& t, Var q, Var k, Var v, int heads,
                         std::vector<Matrix>* attention = nullptr);

Var gather_rows(Tape& t, Var table, std::span<const int> ids);
Var scale_rows(Tape& t, Var a, Var s);          // a (n x d) * s (n x 1) rowwise
Var add_masked_row(Tape& t, Var a, Var row, std::span<const std::uint8_t> mask);
Var mean_rows(Tape& t, Var a);                  // -> 1 x d
Var select_row(Tape& t, Var a, Eigen::Index r);  // -> 1 x d
Var mean_scalars(Tape& t, std::span<const Var> xs);

// n x 1 column equal to `base` except at the listed rows, which take the value
// of the corresponding 1x1 variable.
Var assemble_column(Tape& t, const Vector& base,
                    std::span<const std::pair<std::size_t, Var>> overrides);

// Numerically stable binary cross-entropy on a 1x1 logit.
Var bce_with_logits(Tape& t, Var logit, double label);

double sigmoid(double z);
// log(1 + exp(z)) without overflow.
double softplus(double z);

}  // namespace affect::nn
