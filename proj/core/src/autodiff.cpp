#include "scriptcl/autodiff.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "scriptcl/error.hpp"

namespace scriptcl::ad {

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Matrix Var::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

double Var::item() const {
  if (rows() != 1 || cols() != 1) throw DimensionMismatch("item() on a non-scalar Var");
  return node_->value(0, 0);
}

Var make_op(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  Var out(std::move(value));
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(inputs.size());
  for (auto& in : inputs) out.node_->parents.push_back(in.node_);
  out.node_->backward = std::move(backward);
  return out;
}

void Var::backward() const {
  if (rows() != 1 || cols() != 1) throw DimensionMismatch("backward() needs a scalar output");
  if (!node_->requires_grad) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  // Interior gradients are per-call; only leaves accumulate across calls.
  for (Node* n : order) {
    if (n->backward) n->grad.resize(0, 0);
  }
  node_->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

namespace {

inline void push(Node& self, std::size_t i, const Matrix& g) {
  auto& p = *self.parents[i];
  if (p.requires_grad) p.accumulate(g);
}

inline bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch(std::string(op) + ": shape " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("matmul: inner dimensions differ");
  return make_op(a.value() * b.value(), {a, b}, [](Node& self) {
    const Matrix& A = self.parents[0]->value;
    const Matrix& B = self.parents[1]->value;
    if (wants(self, 0)) push(self, 0, self.grad * B.transpose());
    if (wants(self, 1)) push(self, 1, A.transpose() * self.grad);
  });
}

Var transpose(const Var& a) {
  return make_op(a.value().transpose(), {a},
                 [](Node& self) { push(self, 0, self.grad.transpose()); });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](Node& self) {
    push(self, 0, self.grad);
    push(self, 1, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](Node& self) {
    push(self, 0, self.grad);
    if (wants(self, 1)) push(self, 1, -self.grad);
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    if (wants(self, 0)) push(self, 0, self.grad.cwiseProduct(self.parents[1]->value));
    if (wants(self, 1)) push(self, 1, self.grad.cwiseProduct(self.parents[0]->value));
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& self) { push(self, 0, self.grad * s); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw DimensionMismatch("add_row: bad row shape");
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return make_op(std::move(out), {a, row}, [](Node& self) {
    push(self, 0, self.grad);
    if (wants(self, 1)) push(self, 1, self.grad.colwise().sum());
  });
}

Var tanh(const Var& a) {
  Matrix y = a.value().array().tanh().matrix();
  return make_op(y, {a}, [](Node& self) {
    const Matrix& y = self.value;
    push(self, 0, (self.grad.array() * (1.0 - y.array().square())).matrix());
  });
}

Var relu(const Var& a) {
  return make_op(a.value().cwiseMax(0.0), {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    push(self, 0, (self.grad.array() * (x.array() > 0.0).cast<double>()).matrix());
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(const Var& a) {
  const auto& x = a.value().array();
  Matrix y = (0.5 * x * (1.0 + (kGeluC * (x + kGeluA * x.cube())).tanh())).matrix();
  return make_op(std::move(y), {a}, [](Node& self) {
    const auto& x = self.parents[0]->value.array();
    auto t = (kGeluC * (x + kGeluA * x.cube())).tanh();
    auto dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t.square()) * kGeluC * (1.0 + 3.0 * kGeluA * x.square());
    push(self, 0, (self.grad.array() * dy).matrix());
  });
}

Var gather_rows(const Var& a, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw DimensionMismatch("gather_rows: row out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return make_op(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    const Matrix& src = self.parents[0]->value;
    Matrix g = Matrix::Zero(src.rows(), src.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    push(self, 0, g);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw EmptyInput("concat_rows of nothing");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionMismatch("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_op(std::move(out), {parts.begin(), parts.end()}, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (wants(self, i)) push(self, i, self.grad.middleRows(offsets[i], self.parents[i]->value.rows()));
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw EmptyInput("concat_cols of nothing");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DimensionMismatch("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_op(std::move(out), {parts.begin(), parts.end()}, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (wants(self, i)) push(self, i, self.grad.middleCols(offsets[i], self.parents[i]->value.cols()));
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw DimensionMismatch("slice_cols out of range");
  return make_op(a.value().middleCols(start, count), {a}, [start, count](Node& self) {
    const Matrix& src = self.parents[0]->value;
    Matrix g = Matrix::Zero(src.rows(), src.cols());
    g.middleCols(start, count) = self.grad;
    push(self, 0, g);
  });
}

namespace {

Matrix softmax_value(const Matrix& x, const Matrix* mask) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (!mask || (*mask)(i, j) != 0.0) best = std::max(best, x(i, j));
    }
    if (!std::isfinite(best)) throw EmptyMask("softmax row " + std::to_string(i) + " has no allowed entry");
    double total = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double e = (!mask || (*mask)(i, j) != 0.0) ? std::exp(x(i, j) - best) : 0.0;
      y(i, j) = e;
      total += e;
    }
    y.row(i) /= total;
  }
  return y;
}

void softmax_backward(Node& self) {
  const Matrix& y = self.value;
  Vector dot = (self.grad.cwiseProduct(y)).rowwise().sum();
  Matrix g = y.cwiseProduct(self.grad - dot.replicate(1, y.cols()));
  push(self, 0, g);
}

}  // namespace

Var softmax_rows(const Var& a) {
  return make_op(softmax_value(a.value(), nullptr), {a}, softmax_backward);
}

Var masked_softmax_rows(const Var& a, const Matrix& mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) throw DimensionMismatch("mask shape");
  return make_op(softmax_value(a.value(), &mask), {a}, softmax_backward);
}

Var log_softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double best = x.row(i).maxCoeff();
    const double lse = best + std::log((x.row(i).array() - best).exp().sum());
    y.row(i) = x.row(i).array() - lse;
  }
  return make_op(std::move(y), {a}, [](Node& self) {
    Matrix p = self.value.array().exp().matrix();
    Vector total = self.grad.rowwise().sum();
    push(self, 0, self.grad - p.cwiseProduct(total.replicate(1, p.cols())));
  });
}

Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps) {
  const Matrix& x = a.value();
  const Eigen::Index d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
    throw DimensionMismatch("layer_norm: gamma/beta must be 1 x d");
  }
  Matrix xhat(x.rows(), d);
  Vector inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mu) * inv_std(i);
  }
  Matrix y = xhat;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    y.row(i) = xhat.row(i).cwiseProduct(gamma.value().row(0)) + beta.value().row(0);
  }
  return make_op(std::move(y), {a, gamma, beta}, [xhat, inv_std](Node& self) {
    const Matrix& G = self.grad;
    const Matrix& g = self.parents[1]->value;
    if (wants(self, 1)) push(self, 1, G.cwiseProduct(xhat).colwise().sum());
    if (wants(self, 2)) push(self, 2, G.colwise().sum());
    if (wants(self, 0)) {
      Matrix dx(G.rows(), G.cols());
      for (Eigen::Index i = 0; i < G.rows(); ++i) {
        RowVector dxhat = G.row(i).cwiseProduct(g.row(0));
        const double m1 = dxhat.mean();
        const double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
        dx.row(i) = inv_std(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2).matrix();
      }
      push(self, 0, dx);
    }
  });
}

Var l2_normalize_rows(const Var& a) {
  const Matrix& x = a.value();
  Vector norms = x.rowwise().norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i) {
    if (!(norms(i) > 0.0)) throw ZeroVector("row " + std::to_string(i) + " has zero norm");
  }
  Matrix y = x.array().colwise() / norms.array();
  return make_op(std::move(y), {a}, [norms](Node& self) {
    const Matrix& y = self.value;
    Vector dot = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = (self.grad - y.cwiseProduct(dot.replicate(1, y.cols()))).array().colwise() / norms.array();
    push(self, 0, g);
  });
}

Var pick_sum(const Var& a, std::span<const int> cols) {
  if (static_cast<Eigen::Index>(cols.size()) != a.rows()) throw DimensionMismatch("pick_sum: one column per row");
  double total = 0.0;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] < 0 || cols[i] >= a.cols()) throw LabelOutOfRange("pick_sum column " + std::to_string(cols[i]));
    total += a.value()(static_cast<Eigen::Index>(i), cols[i]);
  }
  std::vector<int> idx(cols.begin(), cols.end());
  return make_op(Matrix::Constant(1, 1, total), {a}, [idx = std::move(idx)](Node& self) {
    const Matrix& src = self.parents[0]->value;
    Matrix g = Matrix::Zero(src.rows(), src.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g(static_cast<Eigen::Index>(i), idx[i]) = self.grad(0, 0);
    push(self, 0, g);
  });
}

Var sum(const Var& a) {
  return make_op(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
    const Matrix& src = self.parents[0]->value;
    push(self, 0, Matrix::Constant(src.rows(), src.cols(), self.grad(0, 0)));
  });
}

}  // namespace scriptcl::ad
