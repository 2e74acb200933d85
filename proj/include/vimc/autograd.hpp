#pragma once

// Reverse-mode automatic differentiation over dense double-precision
// matrices. A Tape records every operation eagerly (values are available as
// soon as an op returns) and replays the recorded adjoints in reverse order.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace vimc::ag {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// Per-position validity flags: 1 for a real token, 0 for PAD.
using Mask = std::vector<std::uint8_t>;

inline Mask full_mask(Eigen::Index n) { return Mask(static_cast<std::size_t>(n), 1); }

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Owns named parameters with stable addresses.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Matrix init);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, Parameter*, std::less<>> by_name_;
};

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  /// Receives the node's output gradient and output value.
  using Backward = std::function<void(Tape&, const Matrix& out_grad, const Matrix& out_value)>;

  /// With `record_gradients` false, parameters are treated as constants
  /// and no backward closures are stored.
  explicit Tape(bool record_gradients = true) : record_(record_gradients) { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(Parameter& p);

  const Matrix& value(int id) const;
  const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Records a node; `backward` is dropped when no input needs a gradient.
  Var push(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var push(Matrix value, const std::vector<Var>& inputs, Backward backward);

  void accumulate(int id, const Matrix& g);

  /// Seeds d(root)/d(root) = 1 and accumulates into Parameter::grad.
  void backward(Var root);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    const Matrix* borrowed = nullptr;
    Parameter* param = nullptr;
    bool needs_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  std::map<const Parameter*, int> param_nodes_;
  bool record_ = true;
};

// Linear algebra
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var transpose(Var a);

// Elementwise
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cmul(Var a, Var b);
Var scale(Var a, double s);
Var affine(Var a, double alpha, double beta);  // alpha * a + beta
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);

// Broadcasting
Var add_row(Var a, Var row);  // a (m x n) + row (1 x n) on every row
Var add_col(Var a, Var col);  // a (m x n) + col (m x 1) on every column
Var mul_row(Var a, Var row);  // a (m x n) scaled columnwise by row (1 x n)
Var mul_col(Var a, Var col);  // a (m x n) scaled rowwise by col (m x 1)

// Shape
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var gather_rows(Var table, const std::vector<int>& ids);

// Reductions
Var sum(Var a);
Var row_sum(Var a);  // m x 1
/// Columnwise maximum over rows whose mask entry is 1; result 1 x n.
Var max_rows(Var a, const Mask& row_mask);
/// Elementwise mean whose value does not depend on the order of `parts`:
/// each element's addends are summed in ascending order.
Var symmetric_mean(const std::vector<Var>& parts);

// Normalization
/// Row softmax. Columns with col_mask == 0 (and, when causal, columns j > i)
/// receive probability 0. A row without any admissible column is all zeros.
Var softmax_rows(Var a, const Mask* col_mask = nullptr, bool causal = false);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

/// Sum over rows of -log softmax(logits)[row, targets[row]].
Var cross_entropy_rows(Var logits, const std::vector<int>& targets);

// Phrasal structure
/// Log link strengths ln P_k for k = 0..n-2 from neighbour relation scores
/// r_k = b(f_k, f_{k+1}) given as an (n-1) x 1 column.
Var log_link_strengths(Var neighbor_scores);
/// n x n matrix with entry (i, j), i < j, equal to exp(sum_{k=i}^{j-1} ln P_k),
/// unit diagonal, symmetric; rows and columns at or beyond the number of
/// links + 1 are set to 1.
Var phrasal_from_log_links(Var log_links, Eigen::Index n);

}  // namespace vimc::ag
