#include "vimc/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vimc::ag {

// ---------------------------------------------------------------- params

Parameter& ParameterSet::add(const std::string& name, Matrix init) {
  if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Matrix::Zero(init.rows(), init.cols());
  p->value = std::move(init);
  Parameter& ref = *p;
  params_.push_back(std::move(p));
  by_name_.emplace(name, &ref);
  return ref;
}

Parameter& ParameterSet::at(std::string_view name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return *it->second;
}

const Parameter& ParameterSet::at(std::string_view name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return *it->second;
}

bool ParameterSet::contains(std::string_view name) const { return by_name_.find(name) != by_name_.end(); }

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->grad.setZero(p->value.rows(), p->value.cols());
}

// ------------------------------------------------------------------ tape

const Matrix& Var::value() const { return tape->value(id); }

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.borrowed ? *n.borrowed : n.value;
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.borrowed = &p.value;
  n.param = &p;
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return {this, id};
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || needs_grad(v.id);
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::push(Matrix value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || needs_grad(v.id);
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::invalid_argument("backward: variable from another tape");
  const Matrix& rv = value(root.id);
  if (rv.rows() != 1 || rv.cols() != 1) throw std::invalid_argument("backward: root must be a scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[static_cast<std::size_t>(root.id)].grad = Matrix::Ones(1, 1);
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.param) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      // Copy: the callback may accumulate into nodes whose storage moves.
      Matrix g = n.grad;
      n.backward(*this, g, value(id));
    }
  }
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

}  // namespace

// ------------------------------------------------------------ linear alg

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(a.id)) t.accumulate(a.id, g * t.value(b.id).transpose());
    if (t.needs_grad(b.id)) t.accumulate(b.id, t.value(a.id).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Matrix out = a.value() * b.value().transpose();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(a.id)) t.accumulate(a.id, g * t.value(b.id));
    if (t.needs_grad(b.id)) t.accumulate(b.id, g.transpose() * t.value(a.id));
  });
}

Var transpose(Var a) {
  Matrix out = a.value().transpose();
  return a.tape->push(std::move(out), {a},
                      [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a.id, g.transpose()); });
}

// ----------------------------------------------------------- elementwise

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a.id, g);
    if (t.needs_grad(b.id)) t.accumulate(b.id, -g);
  });
}

Var cmul(Var a, Var b) {
  same_shape(a, b, "cmul");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(a.id)) t.accumulate(a.id, g.cwiseProduct(t.value(b.id)));
    if (t.needs_grad(b.id)) t.accumulate(b.id, g.cwiseProduct(t.value(a.id)));
  });
}

Var scale(Var a, double s) { return affine(a, s, 0.0); }

Var affine(Var a, double alpha, double beta) {
  Matrix out = (alpha * a.value().array() + beta).matrix();
  return a.tape->push(std::move(out), {a},
                      [a, alpha](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a.id, alpha * g); });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  return a.tape->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(a.id, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var sigmoid(Var a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return a.tape->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(a.id, (g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& x = t.value(a.id);
    t.accumulate(a.id, (x.array() > 0.0).select(g, 0.0).matrix());
  });
}

// ---------------------------------------------------------- broadcasting

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: row must be 1 x cols");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape->push(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a.id, g);
    if (t.needs_grad(row.id)) t.accumulate(row.id, g.colwise().sum());
  });
}

Var add_col(Var a, Var col) {
  require(col.cols() == 1 && col.rows() == a.rows(), "add_col: col must be rows x 1");
  Matrix out = a.value().colwise() + col.value().col(0);
  return a.tape->push(std::move(out), {a, col}, [a, col](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a.id, g);
    if (t.needs_grad(col.id)) t.accumulate(col.id, g.rowwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "mul_row: row must be 1 x cols");
  Matrix out = a.value() * row.value().row(0).asDiagonal();
  return a.tape->push(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(a.id)) t.accumulate(a.id, g * t.value(row.id).row(0).asDiagonal());
    if (t.needs_grad(row.id)) t.accumulate(row.id, g.cwiseProduct(t.value(a.id)).colwise().sum());
  });
}

Var mul_col(Var a, Var col) {
  require(col.cols() == 1 && col.rows() == a.rows(), "mul_col: col must be rows x 1");
  Matrix out = col.value().col(0).asDiagonal() * a.value();
  return a.tape->push(std::move(out), {a, col}, [a, col](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(a.id)) t.accumulate(a.id, t.value(col.id).col(0).asDiagonal() * g);
    if (t.needs_grad(col.id)) t.accumulate(col.id, g.cwiseProduct(t.value(a.id)).rowwise().sum());
  });
}

// ----------------------------------------------------------------- shape

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no parts");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: width mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return parts.front().tape->push(std::move(out), parts, [parts](Tape& t, const Matrix& g, const Matrix&) {
    Eigen::Index r0 = 0;
    for (const Var& p : parts) {
      const Eigen::Index n = t.value(p.id).rows();
      if (t.needs_grad(p.id)) t.accumulate(p.id, g.middleRows(r0, n));
      r0 += n;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return parts.front().tape->push(std::move(out), parts, [parts](Tape& t, const Matrix& g, const Matrix&) {
    Eigen::Index c0 = 0;
    for (const Var& p : parts) {
      const Eigen::Index n = t.value(p.id).cols();
      if (t.needs_grad(p.id)) t.accumulate(p.id, g.middleCols(c0, n));
      c0 += n;
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  Matrix out = a.value().middleRows(start, count);
  return a.tape->push(std::move(out), {a}, [a, start, count](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& x = t.value(a.id);
    Matrix full = Matrix::Zero(x.rows(), x.cols());
    full.middleRows(start, count) = g;
    t.accumulate(a.id, full);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  Matrix out = a.value().middleCols(start, count);
  return a.tape->push(std::move(out), {a}, [a, start, count](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& x = t.value(a.id);
    Matrix full = Matrix::Zero(x.rows(), x.cols());
    full.middleCols(start, count) = g;
    t.accumulate(a.id, full);
  });
}

Var gather_rows(Var table, const std::vector<int>& ids) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(tv.rows()) + " rows");
    }
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  return table.tape->push(std::move(out), {table}, [table, ids](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& tv2 = t.value(table.id);
    Matrix full = Matrix::Zero(tv2.rows(), tv2.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) full.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(table.id, full);
  });
}

// ------------------------------------------------------------ reductions

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& x = t.value(a.id);
    t.accumulate(a.id, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var row_sum(Var a) {
  Matrix out = a.value().rowwise().sum();
  return a.tape->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& x = t.value(a.id);
    t.accumulate(a.id, g.col(0).replicate(1, x.cols()));
  });
}

Var max_rows(Var a, const Mask& row_mask) {
  const Matrix& x = a.value();
  require(static_cast<Eigen::Index>(row_mask.size()) == x.rows(), "max_rows: mask length mismatch");
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(x.cols()), -1);
  Matrix out(1, x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      if (!row_mask[static_cast<std::size_t>(r)]) continue;
      auto& best = arg[static_cast<std::size_t>(c)];
      if (best < 0 || x(r, c) > x(best, c)) best = r;
    }
    if (arg[static_cast<std::size_t>(c)] < 0) throw std::invalid_argument("max_rows: every row is masked");
    out(0, c) = x(arg[static_cast<std::size_t>(c)], c);
  }
  return a.tape->push(std::move(out), {a}, [a, arg](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& xv = t.value(a.id);
    Matrix full = Matrix::Zero(xv.rows(), xv.cols());
    for (Eigen::Index c = 0; c < xv.cols(); ++c) full(arg[static_cast<std::size_t>(c)], c) = g(0, c);
    t.accumulate(a.id, full);
  });
}

Var symmetric_mean(const std::vector<Var>& parts) {
  require(!parts.empty(), "symmetric_mean: no parts");
  for (const Var& p : parts) same_shape(parts.front(), p, "symmetric_mean");
  const Matrix& first = parts.front().value();
  const auto count = static_cast<double>(parts.size());
  Matrix out(first.rows(), first.cols());
  std::vector<double> buf(parts.size());
  for (Eigen::Index j = 0; j < first.cols(); ++j) {
    for (Eigen::Index i = 0; i < first.rows(); ++i) {
      for (std::size_t p = 0; p < parts.size(); ++p) buf[p] = parts[p].value()(i, j);
      std::sort(buf.begin(), buf.end());
      double acc = 0.0;
      for (double v : buf) acc += v;
      out(i, j) = acc / count;
    }
  }
  return parts.front().tape->push(std::move(out), parts, [parts, count](Tape& t, const Matrix& g, const Matrix&) {
    for (const Var& p : parts) t.accumulate(p.id, g / count);
  });
}

// --------------------------------------------------------- normalization

Var softmax_rows(Var a, const Mask* col_mask, bool causal) {
  const Matrix& x = a.value();
  if (col_mask) require(static_cast<Eigen::Index>(col_mask->size()) == x.cols(), "softmax_rows: mask length mismatch");
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    auto admissible = [&](Eigen::Index j) {
      if (col_mask && !(*col_mask)[static_cast<std::size_t>(j)]) return false;
      if (causal && j > i) return false;
      return true;
    };
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (admissible(j)) mx = std::max(mx, x(i, j));
    }
    if (!std::isfinite(mx)) {
      if (mx == -std::numeric_limits<double>::infinity()) continue;
      throw std::domain_error("softmax_rows: non-finite input");
    }
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (!admissible(j)) continue;
      out(i, j) = std::exp(x(i, j) - mx);
      z += out(i, j);
    }
    out.row(i) /= z;
  }
  return a.tape->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(a.id, (y.array() * (g.colwise() - dots).array()).matrix());
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = x.value();
  const Eigen::Index d = xv.cols();
  require(gain.rows() == 1 && gain.cols() == d && bias.rows() == 1 && bias.cols() == d,
          "layer_norm_rows: gain/bias must be 1 x width");
  Matrix xhat(xv.rows(), d);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (xhat * gain.value().row(0).asDiagonal()).rowwise() + bias.value().row(0);
  return x.tape->push(std::move(out), {x, gain, bias},
                      [x, gain, bias, xhat, inv_std](Tape& t, const Matrix& g, const Matrix&) {
                        if (t.needs_grad(gain.id)) t.accumulate(gain.id, g.cwiseProduct(xhat).colwise().sum());
                        if (t.needs_grad(bias.id)) t.accumulate(bias.id, g.colwise().sum());
                        if (!t.needs_grad(x.id)) return;
                        Matrix dxhat = g * t.value(gain.id).row(0).asDiagonal();
                        const double d2 = static_cast<double>(dxhat.cols());
                        Matrix dx(dxhat.rows(), dxhat.cols());
                        for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                          const double m1 = dxhat.row(i).sum() / d2;
                          const double m2 = dxhat.row(i).dot(xhat.row(i)) / d2;
                          dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                        }
                        t.accumulate(x.id, dx);
                      });
}

Var cross_entropy_rows(Var logits, const std::vector<int>& targets) {
  const Matrix& z = logits.value();
  require(static_cast<Eigen::Index>(targets.size()) == z.rows(), "cross_entropy_rows: target count mismatch");
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int target = targets[static_cast<std::size_t>(i)];
    if (target < 0 || target >= z.cols()) throw std::out_of_range("cross_entropy_rows: target out of range");
    const double mx = z.row(i).maxCoeff();
    probs.row(i) = (z.row(i).array() - mx).exp();
    const double zsum = probs.row(i).sum();
    probs.row(i) /= zsum;
    loss -= z(i, target) - mx - std::log(zsum);
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  return logits.tape->push(std::move(out), {logits}, [logits, probs, targets](Tape& t, const Matrix& g, const Matrix&) {
    Matrix d = probs;
    for (std::size_t i = 0; i < targets.size(); ++i) d(static_cast<Eigen::Index>(i), targets[i]) -= 1.0;
    t.accumulate(logits.id, g(0, 0) * d);
  });
}

// ------------------------------------------------------------- phrasal

namespace {

// Softmax over a token's two neighbour scores (left, right).
struct NeighbourSplit {
  double log_left;
  double log_right;
  double p_left;
  double p_right;
};

NeighbourSplit split(double left, double right) {
  const double mx = std::max(left, right);
  const double lse = mx + std::log(std::exp(left - mx) + std::exp(right - mx));
  NeighbourSplit s{left - lse, right - lse, 0.0, 0.0};
  s.p_left = std::exp(s.log_left);
  s.p_right = std::exp(s.log_right);
  return s;
}

}  // namespace

Var log_link_strengths(Var neighbor_scores) {
  const Matrix& r = neighbor_scores.value();
  require(r.cols() == 1 || r.rows() == 0, "log_link_strengths: expected a column");
  const Eigen::Index links = r.rows();
  const Eigen::Index n = links + 1;
  // Token j in [1, n-2] is interior and splits its mass between r_{j-1} and r_j.
  std::vector<NeighbourSplit> interior(static_cast<std::size_t>(std::max<Eigen::Index>(n, 0)));
  for (Eigen::Index j = 1; j + 1 < n; ++j) interior[static_cast<std::size_t>(j)] = split(r(j - 1, 0), r(j, 0));
  Matrix out(links, 1);
  for (Eigen::Index k = 0; k < links; ++k) {
    const double right_of_k = (k >= 1) ? interior[static_cast<std::size_t>(k)].log_right : 0.0;
    const double left_of_next = (k + 1 <= n - 2) ? interior[static_cast<std::size_t>(k + 1)].log_left : 0.0;
    out(k, 0) = 0.5 * (right_of_k + left_of_next);
  }
  return neighbor_scores.tape->push(
      std::move(out), {neighbor_scores}, [neighbor_scores, interior, n](Tape& t, const Matrix& g, const Matrix&) {
        const Eigen::Index links = n - 1;
        Matrix dr = Matrix::Zero(links, 1);
        for (Eigen::Index k = 0; k < links; ++k) {
          const double gk = 0.5 * g(k, 0);
          if (k >= 1) {
            const auto& s = interior[static_cast<std::size_t>(k)];
            dr(k, 0) += gk * s.p_left;
            dr(k - 1, 0) -= gk * s.p_left;
          }
          if (k + 1 <= n - 2) {
            const auto& s = interior[static_cast<std::size_t>(k + 1)];
            dr(k, 0) += gk * s.p_right;
            dr(k + 1, 0) -= gk * s.p_right;
          }
        }
        t.accumulate(neighbor_scores.id, dr);
      });
}

Var phrasal_from_log_links(Var log_links, Eigen::Index n) {
  const Matrix& lp = log_links.value();
  const Eigen::Index valid = lp.rows() + 1;
  require(valid <= n || (lp.rows() == 0 && n == 0), "phrasal_from_log_links: more links than positions");
  for (Eigen::Index k = 0; k < lp.rows(); ++k) {
    if (!(lp(k, 0) <= 0.0) || !std::isfinite(lp(k, 0))) {
      throw std::domain_error("phrasal_from_log_links: link strength outside (0, 1]");
    }
  }
  Matrix out = Matrix::Ones(n, n);
  for (Eigen::Index i = 0; i < std::min(valid, n); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = i + 1; j < valid; ++j) {
      acc += lp(j - 1, 0);
      const double p = std::exp(acc);
      out(i, j) = p;
      out(j, i) = p;
    }
  }
  return log_links.tape->push(std::move(out), {log_links}, [log_links, valid](Tape& t, const Matrix& g, const Matrix& y) {
    // d P_ij / d ln P_k = P_ij for i <= k < j.
    const Eigen::Index links = valid - 1;
    Eigen::VectorXd ds = Eigen::VectorXd::Zero(valid);
    for (Eigen::Index i = 0; i < valid; ++i) {
      for (Eigen::Index j = i + 1; j < valid; ++j) {
        const double w = (g(i, j) + g(j, i)) * y(i, j);
        ds(j) += w;
        ds(i) -= w;
      }
    }
    Matrix dl = Matrix::Zero(links, 1);
    double suffix = 0.0;
    for (Eigen::Index k = links - 1; k >= 0; --k) {
      suffix += ds(k + 1);
      dl(k, 0) = suffix;
    }
    t.accumulate(log_links.id, dl);
  });
}

}  // namespace vimc::ag
