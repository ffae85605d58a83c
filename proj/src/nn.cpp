#include "affect/nn.hpp"

#include <cassert>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "affect/common.hpp"

namespace affect::nn {

Parameter::Parameter(std::string n, Matrix v)
    : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

std::size_t parameter_count(const ParameterRefs& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += static_cast<std::size_t>(p->size());
  return n;
}

std::vector<double> flatten(const ParameterRefs& params) {
  std::vector<double> out;
  out.reserve(parameter_count(params));
  for (const auto* p : params) out.insert(out.end(), p->value.data(), p->value.data() + p->size());
  return out;
}

void unflatten(const ParameterRefs& params, std::span<const double> flat) {
  if (flat.size() != parameter_count(params)) throw DimensionError("parameter vector size mismatch");
  std::size_t offset = 0;
  for (auto* p : params) {
    std::memcpy(p->value.data(), flat.data() + offset, sizeof(double) * static_cast<std::size_t>(p->size()));
    offset += static_cast<std::size_t>(p->size());
  }
}

std::vector<double> flatten_grads(const ParameterRefs& params) {
  std::vector<double> out;
  out.reserve(parameter_count(params));
  for (const auto* p : params) out.insert(out.end(), p->grad.data(), p->grad.data() + p->size());
  return out;
}

void zero_grads(const ParameterRefs& params) {
  for (auto* p : params) p->zero_grad();
}

std::uint64_t checksum(const ParameterRefs& params) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto* p : params) {
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(p->value.data()),
                                 sizeof(double) * static_cast<std::size_t>(p->size())),
                h);
  }
  return h;
}

Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(Parameter& p) {
  Var v = push(Matrix(), true, [&p](Tape& t, std::uint32_t self) { p.grad += t.nodes_[self].grad; });
  nodes_[v.id].external = &p.value;
  return v;
}

Var Tape::push(Matrix value, bool needs_grad, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_ && needs_grad;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Matrix& Tape::grad_ref(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Matrix& v = value_of(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Matrix::Zero(value(v).rows(), value(v).cols());
  return n.grad;
}

void Tape::backward(Var root, double seed) {
  if (!record_) throw Error("backward() on a non-recording tape");
  if (value(root).size() != 1) throw DimensionError("backward root must be a scalar");
  grad_ref(root.id)(0, 0) += seed;
  for (std::uint32_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, i);
  }
}

namespace {

inline bool ng(const Tape& t, Var a) { return t.needs_grad(a); }
inline bool ng(const Tape& t, Var a, Var b) { return t.needs_grad(a) || t.needs_grad(b); }

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch");
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "add");
  return t.push(t.value(a) + t.value(b), ng(t, a, b), [a, b](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_ref(self);
    if (t.needs_grad(a)) t.grad_ref(a.id) += g;
    if (t.needs_grad(b)) t.grad_ref(b.id) += g;
  });
}

Var add_row(Tape& t, Var a, Var row) {
  if (t.value(row).rows() != 1 || t.value(row).cols() != t.value(a).cols())
    throw DimensionError("add_row: shape mismatch");
  Matrix out = t.value(a).rowwise() + t.value(row).row(0);
  return t.push(std::move(out), ng(t, a, row), [a, row](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_ref(self);
    if (t.needs_grad(a)) t.grad_ref(a.id) += g;
    if (t.needs_grad(row)) t.grad_ref(row.id) += g.colwise().sum();
  });
}

Var matmul(Tape& t, Var a, Var b) {
  if (t.value(a).cols() != t.value(b).rows()) throw DimensionError("matmul: inner dimension mismatch");
  Matrix out = t.value(a) * t.value(b);
  return t.push(std::move(out), ng(t, a, b), [a, b](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_ref(self);
    if (t.needs_grad(a)) t.grad_ref(a.id).noalias() += g * t.value(b).transpose();
    if (t.needs_grad(b)) t.grad_ref(b.id).noalias() += t.value(a).transpose() * g;
  });
}

Var linear(Tape& t, Var x, Var weight, Var bias) {
  const Matrix& X = t.value(x);
  const Matrix& W = t.value(weight);
  const Matrix& B = t.value(bias);
  if (X.cols() != W.rows() || B.rows() != 1 || B.cols() != W.cols())
    throw DimensionError("linear: shape mismatch");
  Matrix out(X.rows(), W.cols());
  out.noalias() = X * W;
  out.rowwise() += B.row(0);
  const bool needs = t.needs_grad(x) || t.needs_grad(weight) || t.needs_grad(bias);
  return t.push(std::move(out), needs, [x, weight, bias](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_ref(self);
    if (t.needs_grad(x)) t.grad_ref(x.id).noalias() += g * t.value(weight).transpose();
    if (t.needs_grad(weight)) t.grad_ref(weight.id).noalias() += t.value(x).transpose() * g;
    if (t.needs_grad(bias)) t.grad_ref(bias.id) += g.colwise().sum();
  });
}

Var scale(Tape& t, Var a, double s) {
  return t.push(t.value(a) * s, ng(t, a), [a, s](Tape& t, std::uint32_t self) {
    t.grad_ref(a.id) += t.grad_ref(self) * s;
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Tape& t, Var a) {
  const Matrix& x = t.value(a);
  Matrix out = x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  });
  return t.push(std::move(out), ng(t, a), [a](Tape& t, std::uint32_t self) {
    const Matrix& x = t.value(a);
    const Matrix& g = t.grad_ref(self);
    Matrix& ga = t.grad_ref(a.id);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double v = x(i, j);
        const double u = kGeluC * (v + kGeluA * v * v * v);
        const double th = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
        ga(i, j) += g(i, j) * d;
      }
    }
  });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  const Matrix& X = t.value(x);
  const Eigen::Index n = X.rows(), d = X.cols();
  if (t.value(gain).cols() != d || t.value(bias).cols() != d) throw DimensionError("layer_norm: shape mismatch");
  Matrix xhat(n, d);
  Vector inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = X.row(i).mean();
    const double var = (X.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (X.row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * t.value(gain).row(0).array()).matrix();
  out.rowwise() += t.value(bias).row(0);
  const bool needs = t.needs_grad(x) || t.needs_grad(gain) || t.needs_grad(bias);
  return t.push(std::move(out), needs,
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Tape& t, std::uint32_t self) {
                  const Matrix& g = t.grad_ref(self);
                  if (t.needs_grad(gain))
                    t.grad_ref(gain.id) += (g.array() * xhat.array()).colwise().sum().matrix();
                  if (t.needs_grad(bias)) t.grad_ref(bias.id) += g.colwise().sum();
                  if (t.needs_grad(x)) {
                    const Eigen::Index d = g.cols();
                    Matrix dxhat = (g.array().rowwise() * t.value(gain).row(0).array()).matrix();
                    Matrix& gx = t.grad_ref(x.id);
                    for (Eigen::Index i = 0; i < g.rows(); ++i) {
                      const double m1 = dxhat.row(i).mean();
                      const double m2 = dxhat.row(i).dot(xhat.row(i)) / static_cast<double>(d);
                      gx.row(i).array() +=
                          inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                    }
                  }
                });
}

Var dropout(Tape& t, Var a, const ForwardContext& ctx) {
  if (!ctx.training || ctx.dropout <= 0.0) return a;
  if (ctx.rng == nullptr) throw Error("dropout requires an RNG in training mode");
  const Matrix& x = t.value(a);
  const double keep = 1.0 - ctx.dropout;
  std::bernoulli_distribution coin(keep);
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) mask(i, j) = coin(*ctx.rng) ? 1.0 / keep : 0.0;
  Matrix out = x.cwiseProduct(mask);
  return t.push(std::move(out), ng(t, a), [a, mask = std::move(mask)](Tape& t, std::uint32_t self) {
    t.grad_ref(a.id) += t.grad_ref(self).cwiseProduct(mask);
  });
}

Var multi_head_attention(Tape& t, Var q, Var k, Var v, int heads, std::vector<Matrix>* attention) {
  const Matrix& Q = t.value(q);
  const Matrix& K = t.value(k);
  const Matrix& V = t.value(v);
  const Eigen::Index n = Q.rows(), d = Q.cols();
  if (heads <= 0 || d % heads != 0) throw DimensionError("attention: model dim not divisible by heads");
  if (K.rows() != n || V.rows() != n || K.cols() != d || V.cols() != d)
    throw DimensionError("attention: shape mismatch");
  const Eigen::Index hd = d / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(hd));

  std::vector<Matrix> weights(static_cast<std::size_t>(heads));
  Matrix out(n, d);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c = h * hd;
    Matrix scores = (Q.middleCols(c, hd) * K.middleCols(c, hd).transpose()) * s;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = scores.row(i).maxCoeff();
      scores.row(i) = (scores.row(i).array() - mx).exp();
      scores.row(i) /= scores.row(i).sum();
    }
    out.middleCols(c, hd).noalias() = scores * V.middleCols(c, hd);
    weights[static_cast<std::size_t>(h)] = std::move(scores);
  }
  if (attention != nullptr) *attention = weights;

  const bool needs = t.needs_grad(q) || t.needs_grad(k) || t.needs_grad(v);
  return t.push(std::move(out), needs,
                [q, k, v, heads, hd, s, weights = std::move(weights)](Tape& t, std::uint32_t self) {
                  const Matrix& g = t.grad_ref(self);
                  const Matrix& Q = t.value(q);
                  const Matrix& K = t.value(k);
                  const Matrix& V = t.value(v);
                  const Eigen::Index n = Q.rows();
                  Matrix gq = Matrix::Zero(n, Q.cols());
                  Matrix gk = Matrix::Zero(n, Q.cols());
                  Matrix gv = Matrix::Zero(n, Q.cols());
                  for (int h = 0; h < heads; ++h) {
                    const Eigen::Index c = h * hd;
                    const Matrix& A = weights[static_cast<std::size_t>(h)];
                    const auto go = g.middleCols(c, hd);
                    Matrix dA = go * V.middleCols(c, hd).transpose();
                    gv.middleCols(c, hd).noalias() += A.transpose() * go;
                    // softmax backward, row by row
                    Vector row_dot = (dA.array() * A.array()).rowwise().sum();
                    Matrix dS = (A.array() * (dA.array().colwise() - row_dot.array())).matrix() * s;
                    gq.middleCols(c, hd).noalias() += dS * K.middleCols(c, hd);
                    gk.middleCols(c, hd).noalias() += dS.transpose() * Q.middleCols(c, hd);
                  }
                  if (t.needs_grad(q)) t.grad_ref(q.id) += gq;
                  if (t.needs_grad(k)) t.grad_ref(k.id) += gk;
                  if (t.needs_grad(v)) t.grad_ref(v.id) += gv;
                });
}

Var gather_rows(Tape& t, Var table, std::span<const int> ids) {
  const Matrix& T = t.value(table);
  Matrix out(static_cast<Eigen::Index>(ids.size()), T.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= T.rows()) throw DimensionError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = T.row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return t.push(std::move(out), ng(t, table), [table, idx = std::move(idx)](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_ref(self);
    Matrix& gt = t.grad_ref(table.id);
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var scale_rows(Tape& t, Var a, Var s) {
  const Matrix& A = t.value(a);
  const Matrix& S = t.value(s);
  if (S.rows() != A.rows() || S.cols() != 1) throw DimensionError("scale_rows: shape mismatch");
  Matrix out = A.array().colwise() * S.col(0).array();
  return t.push(std::move(out), ng(t, a, s), [a, s](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_ref(self);
    if (t.needs_grad(a)) t.grad_ref(a.id).array() += g.array().colwise() * t.value(s).col(0).array();
    if (t.needs_grad(s)) t.grad_ref(s.id).col(0) += (g.array() * t.value(a).array()).rowwise().sum().matrix();
  });
}

Var add_masked_row(Tape& t, Var a, Var row, std::span<const std::uint8_t> mask) {
  const Matrix& A = t.value(a);
  if (static_cast<Eigen::Index>(mask.size()) != A.rows() || t.value(row).cols() != A.cols())
    throw DimensionError("add_masked_row: shape mismatch");
  Matrix out = A;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.row(static_cast<Eigen::Index>(i)) += t.value(row).row(0);
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return t.push(std::move(out), ng(t, a, row), [a, row, m = std::move(m)](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_ref(self);
    if (t.needs_grad(a)) t.grad_ref(a.id) += g;
    if (t.needs_grad(row)) {
      Matrix& gr = t.grad_ref(row.id);
      for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i]) gr.row(0) += g.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var mean_rows(Tape& t, Var a) {
  const Matrix& A = t.value(a);
  Matrix out = A.colwise().mean();
  return t.push(std::move(out), ng(t, a), [a](Tape& t, std::uint32_t self) {
    const Eigen::Index n = t.value(a).rows();
    const RowVector g = t.grad_ref(self).row(0) / static_cast<double>(n);
    t.grad_ref(a.id).rowwise() += g;
  });
}

Var select_row(Tape& t, Var a, Eigen::Index r) {
  if (r < 0 || r >= t.value(a).rows()) throw DimensionError("select_row: out of range");
  Matrix out = t.value(a).row(r);
  return t.push(std::move(out), ng(t, a), [a, r](Tape& t, std::uint32_t self) {
    t.grad_ref(a.id).row(r) += t.grad_ref(self).row(0);
  });
}

Var mean_scalars(Tape& t, std::span<const Var> xs) {
  if (xs.empty()) throw DimensionError("mean_scalars: empty input");
  double sum = 0.0;
  bool needs = false;
  for (Var x : xs) {
    if (t.value(x).size() != 1) throw DimensionError("mean_scalars: expected 1x1 inputs");
    sum += t.scalar(x);
    needs |= t.needs_grad(x);
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  std::vector<Var> ids(xs.begin(), xs.end());
  return t.push(Matrix::Constant(1, 1, sum * inv), needs, [ids = std::move(ids), inv](Tape& t, std::uint32_t self) {
    const double g = t.grad_ref(self)(0, 0) * inv;
    for (Var x : ids)
      if (t.needs_grad(x)) t.grad_ref(x.id)(0, 0) += g;
  });
}

Var assemble_column(Tape& t, const Vector& base, std::span<const std::pair<std::size_t, Var>> overrides) {
  Matrix out = base;
  bool needs = false;
  for (const auto& [row, v] : overrides) {
    if (row >= static_cast<std::size_t>(base.size()) || t.value(v).size() != 1)
      throw DimensionError("assemble_column: bad override");
    out(static_cast<Eigen::Index>(row), 0) = t.scalar(v);
    needs |= t.needs_grad(v);
  }
  std::vector<std::pair<std::size_t, Var>> ov(overrides.begin(), overrides.end());
  return t.push(std::move(out), needs, [ov = std::move(ov)](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_ref(self);
    for (const auto& [row, v] : ov)
      if (t.needs_grad(v)) t.grad_ref(v.id)(0, 0) += g(static_cast<Eigen::Index>(row), 0);
  });
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

Var bce_with_logits(Tape& t, Var logit, double label) {
  if (t.value(logit).size() != 1) throw DimensionError("bce_with_logits: expected a scalar logit");
  const double z = t.scalar(logit);
  // -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
  const double loss = softplus(z) - label * z;
  return t.push(Matrix::Constant(1, 1, loss), ng(t, logit), [logit, label](Tape& t, std::uint32_t self) {
    const double z = t.scalar(logit);
    t.grad_ref(logit.id)(0, 0) += t.grad_ref(self)(0, 0) * (sigmoid(z) - label);
  });
}

}  // namespace affect::nn
