#pragma once

// Minimal reverse-mode automatic differentiation over dense float64
// matrices. A Var is a handle to a graph node; operations build the graph
// eagerly and `backward` propagates gradients into every node that
// requires them. Leaf parameters keep their accumulated gradient until
// `zero_grad` is called.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace scriptcl::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Node {
  Matrix value;
  Matrix grad;  // empty until a gradient is first accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  static Var scalar(double v) { return Var(Matrix::Constant(1, 1, v)); }

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  // Zeros shaped like value() if nothing was accumulated.
  Matrix grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad() { node_->grad.resize(0, 0); }

  Eigen::Index rows() const { return node_ ? node_->value.rows() : 0; }
  Eigen::Index cols() const { return node_ ? node_->value.cols() : 0; }
  double item() const;  // value of a 1x1 Var

  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

  // Runs reverse accumulation from this 1x1 Var with seed gradient 1.
  void backward() const;

 private:
  friend Var make_op(Matrix, std::vector<Var>, std::function<void(Node&)>);
  std::shared_ptr<Node> node_;
};

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(const Var& a, const Var& row);
Var tanh(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);  // tanh approximation

Var gather_rows(const Var& a, std::span<const int> rows);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);

// Row-wise softmax. Entries where `mask` is 0 get probability 0 (they are
// treated as -inf logits); a row with no allowed entry is an error.
Var softmax_rows(const Var& a);
Var masked_softmax_rows(const Var& a, const Matrix& mask);
Var log_softmax_rows(const Var& a);
Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);
// Divides each row by its L2 norm; throws ZeroVector on a zero row.
Var l2_normalize_rows(const Var& a);

// Sum over i of a(i, cols[i]).
Var pick_sum(const Var& a, std::span<const int> cols);
Var sum(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace scriptcl::ad
