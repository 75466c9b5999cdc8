#include "kanc/ad/tape.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "kanc/error.hpp"

namespace kanc::ad {

namespace fn {
namespace {
double exp_v(double x) { return std::exp(x); }
double log_v(double x) { return std::log(x); }
double log_d(double x) { return 1.0 / x; }
double sin_v(double x) { return std::sin(x); }
double cos_v(double x) { return std::cos(x); }
double neg_sin(double x) { return -std::sin(x); }
double tanh_v(double x) { return std::tanh(x); }
double tanh_d(double x) {
  const double t = std::tanh(x);
  return 1.0 - t * t;
}
double abs_v(double x) { return std::fabs(x); }
double abs_d(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}  // namespace

const UnaryFunction exp{"exp", exp_v, exp_v};
const UnaryFunction log{"log", log_v, log_d};
const UnaryFunction sin{"sin", sin_v, cos_v};
const UnaryFunction cos{"cos", cos_v, neg_sin};
const UnaryFunction tanh{"tanh", tanh_v, tanh_d};
const UnaryFunction silu{"silu", spline::silu, spline::silu_deriv};
const UnaryFunction abs{"abs", abs_v, abs_d};
}  // namespace fn

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Shift: return "shift";
    case Op::MulScalar: return "mul_scalar";
    case Op::AddScalar: return "add_scalar";
    case Op::AddColumn: return "add_column";
    case Op::MatMul: return "matmul";
    case Op::Pow: return "pow";
    case Op::Unary: return "unary";
    case Op::Spline: return "spline";
    case Op::Harmonics: return "harmonics";
    case Op::Linear: return "linear";
    case Op::Row: return "row";
    case Op::Sum: return "sum";
  }
  return "?";
}

Tape::Node Tape::make_node(Op op, std::uint32_t a, std::uint32_t b) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  return n;
}

struct Tape::SplineCache {
  std::vector<int> first;
  Matrix values;  // (k+1) x N
  Matrix slopes;  // (k+1) x N
};

void Tape::require(bool condition, std::string_view what) const {
  if (!condition) throw ShapeError(fmt::format("tape node {}: {}", nodes_.size(), what));
}

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  values_.emplace_back();
  const std::size_t i = nodes_.size() - 1;
  evaluate(i);
  check_finite(i);
  return NodeId{static_cast<std::uint32_t>(i)};
}

NodeId Tape::leaf(Matrix value) {
  Node n = make_node(Op::Leaf);
  n.index = static_cast<int>(leaves_.size());
  nodes_.push_back(std::move(n));
  values_.push_back(std::move(value));
  NodeId id{static_cast<std::uint32_t>(nodes_.size() - 1)};
  leaves_.push_back(id);
  check_finite(id.index);
  return id;
}

NodeId Tape::constant(Matrix value) {
  nodes_.push_back(make_node(Op::Constant));
  values_.push_back(std::move(value));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Tape::add(NodeId a, NodeId b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
          "add operands differ in shape");
  return push(make_node(Op::Add, a.index, b.index));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
          "sub operands differ in shape");
  return push(make_node(Op::Sub, a.index, b.index));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
          "mul operands differ in shape");
  return push(make_node(Op::Mul, a.index, b.index));
}

NodeId Tape::scale(NodeId a, double c) {
  Node n = make_node(Op::Scale, a.index);
  n.constant = c;
  return push(std::move(n));
}

NodeId Tape::shift(NodeId a, double c) {
  Node n = make_node(Op::Shift, a.index);
  n.constant = c;
  return push(std::move(n));
}

NodeId Tape::mul_scalar(NodeId a, NodeId s) {
  require(value(s).size() == 1, "mul_scalar expects a 1x1 factor");
  return push(make_node(Op::MulScalar, a.index, s.index));
}

NodeId Tape::add_scalar(NodeId a, NodeId s) {
  require(value(s).size() == 1, "add_scalar expects a 1x1 summand");
  return push(make_node(Op::AddScalar, a.index, s.index));
}

NodeId Tape::add_column(NodeId a, NodeId column) {
  require(value(column).cols() == 1 && value(column).rows() == value(a).rows(),
          "add_column expects a column matching the row count");
  return push(make_node(Op::AddColumn, a.index, column.index));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  require(value(a).cols() == value(b).rows(), "matmul inner dimensions differ");
  return push(make_node(Op::MatMul, a.index, b.index));
}

NodeId Tape::pow(NodeId a, double exponent) {
  Node n = make_node(Op::Pow, a.index);
  n.constant = exponent;
  return push(std::move(n));
}

NodeId Tape::unary(NodeId a, const UnaryFunction& f) {
  Node n = make_node(Op::Unary, a.index);
  n.function = &f;
  return push(std::move(n));
}

NodeId Tape::spline(NodeId x, NodeId coeffs, std::shared_ptr<const spline::KnotVector> knots) {
  require(value(x).rows() == 1, "spline input must be a row");
  require(value(coeffs).cols() == 1 && value(coeffs).rows() == knots->num_basis(),
          "spline coefficients must be a (G+k) column");
  Node n = make_node(Op::Spline, x.index, coeffs.index);
  n.knots = std::move(knots);
  n.cache = std::make_shared<SplineCache>();
  return push(std::move(n));
}

NodeId Tape::harmonics(NodeId x, int grid, bool sine) {
  require(grid >= 1, "harmonics needs at least one frequency");
  Node n = make_node(Op::Harmonics, x.index);
  n.index = grid;
  n.constant = sine ? 1.0 : 0.0;
  return push(std::move(n));
}

NodeId Tape::linear(NodeId a, std::shared_ptr<const SparseMatrix> op) {
  require(value(a).rows() == 1 && value(a).cols() == op->cols(),
          "linear operator width does not match the row");
  Node n = make_node(Op::Linear, a.index);
  n.sparse = std::move(op);
  return push(std::move(n));
}

NodeId Tape::row(NodeId a, int index) {
  require(index >= 0 && index < value(a).rows(), "row index out of range");
  Node n = make_node(Op::Row, a.index);
  n.index = index;
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a) { return push(make_node(Op::Sum, a.index)); }

namespace {

// cos(k x) and sin(k x) for k = 1..G by angle addition.
template <typename F>
void for_each_harmonic(const Matrix& x, int grid, F&& f) {
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double c1 = std::cos(x(i, j));
      const double s1 = std::sin(x(i, j));
      double c = c1;
      double s = s1;
      for (int k = 1; k <= grid; ++k) {
        f(i, j, k, c, s);
        const double cn = c * c1 - s * s1;
        s = s * c1 + c * s1;
        c = cn;
      }
    }
  }
}

}  // namespace

void Tape::evaluate(std::size_t i) {
  const Node& n = nodes_[i];
  Matrix& out = values_[i];
  switch (n.op) {
    case Op::Leaf:
    case Op::Constant:
      return;
    case Op::Add: out = values_[n.a] + values_[n.b]; return;
    case Op::Sub: out = values_[n.a] - values_[n.b]; return;
    case Op::Mul: out = values_[n.a].cwiseProduct(values_[n.b]); return;
    case Op::Scale: out = n.constant * values_[n.a]; return;
    case Op::Shift: out = values_[n.a].array() + n.constant; return;
    case Op::MulScalar: out = values_[n.a] * values_[n.b](0, 0); return;
    case Op::AddScalar: out = values_[n.a].array() + values_[n.b](0, 0); return;
    case Op::AddColumn: out = values_[n.a].colwise() + values_[n.b].col(0); return;
    case Op::MatMul: out.noalias() = values_[n.a] * values_[n.b]; return;
    case Op::Pow: {
      const double p = n.constant;
      if (p == 2.0) {
        out = values_[n.a].array().square();
      } else {
        out = values_[n.a].array().pow(p);
      }
      return;
    }
    case Op::Unary: out = values_[n.a].unaryExpr(n.function->value); return;
    case Op::Spline: {
      const Matrix& x = values_[n.a];
      const Matrix& c = values_[n.b];
      const spline::KnotVector& kv = *n.knots;
      const int m = kv.order() + 1;
      SplineCache& cache = *n.cache;
      const auto cols = x.cols();
      cache.first.resize(static_cast<std::size_t>(cols));
      cache.values.resize(m, cols);
      cache.slopes.resize(m, cols);
      out.resize(1, cols);
      spline::LocalBasis lb;
      for (Eigen::Index j = 0; j < cols; ++j) {
        spline::local_basis(kv, x(0, j), lb, true);
        cache.first[static_cast<std::size_t>(j)] = lb.first;
        double s = 0.0;
        for (int r = 0; r < m; ++r) {
          cache.values(r, j) = lb.value[r];
          cache.slopes(r, j) = lb.slope[r];
          s += c(lb.first + r, 0) * lb.value[r];
        }
        out(0, j) = s;
      }
      return;
    }
    case Op::Harmonics: {
      const Matrix& x = values_[n.a];
      const int grid = n.index;
      const bool sine = n.constant != 0.0;
      out.resize(x.rows() * grid, x.cols());
      for_each_harmonic(x, grid, [&](Eigen::Index r, Eigen::Index j, int k, double c, double s) {
        out(r * grid + (k - 1), j) = sine ? s : c;
      });
      return;
    }
    case Op::Linear: out = (*n.sparse * values_[n.a].transpose()).transpose(); return;
    case Op::Row: out = values_[n.a].row(n.index); return;
    case Op::Sum: out.resize(1, 1); out(0, 0) = values_[n.a].sum(); return;
  }
}

void Tape::check_finite(std::size_t i) const {
  if (!values_[i].allFinite()) {
    const Node& n = nodes_[i];
    const std::string_view detail =
        n.op == Op::Unary ? n.function->name : std::string_view{op_name(n.op)};
    throw EvaluationError(fmt::format("non-finite value at tape node {} ({})", i, detail));
  }
}

void Tape::set_leaf(std::size_t leaf_index, const Matrix& value) {
  Matrix& slot = values_[leaves_.at(leaf_index).index];
  if (slot.rows() != value.rows() || slot.cols() != value.cols()) {
    throw ShapeError(fmt::format("leaf {} expects {}x{}, got {}x{}", leaf_index, slot.rows(),
                                 slot.cols(), value.rows(), value.cols()));
  }
  slot = value;
}

void Tape::forward(std::span<const Matrix> leaf_values) {
  if (leaf_values.size() != leaves_.size()) {
    throw ShapeError(fmt::format("tape has {} leaves, got {} values", leaves_.size(),
                                 leaf_values.size()));
  }
  for (std::size_t l = 0; l < leaf_values.size(); ++l) set_leaf(l, leaf_values[l]);
  forward();
}

void Tape::forward() {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op == Op::Leaf || nodes_[i].op == Op::Constant) {
      if (nodes_[i].op == Op::Leaf) check_finite(i);
      continue;
    }
    evaluate(i);
    check_finite(i);
  }
}

void Tape::accumulate(std::size_t i) {
  const Node& n = nodes_[i];
  const Matrix& g = adjoints_[i];
  auto grad = [&](std::uint32_t k) -> Matrix& { return adjoints_[k]; };
  switch (n.op) {
    case Op::Leaf:
    case Op::Constant:
      return;
    case Op::Add:
      grad(n.a) += g;
      grad(n.b) += g;
      return;
    case Op::Sub:
      grad(n.a) += g;
      grad(n.b) -= g;
      return;
    case Op::Mul:
      grad(n.a) += g.cwiseProduct(values_[n.b]);
      grad(n.b) += g.cwiseProduct(values_[n.a]);
      return;
    case Op::Scale: grad(n.a) += n.constant * g; return;
    case Op::Shift: grad(n.a) += g; return;
    case Op::MulScalar:
      grad(n.a) += g * values_[n.b](0, 0);
      grad(n.b)(0, 0) += g.cwiseProduct(values_[n.a]).sum();
      return;
    case Op::AddScalar:
      grad(n.a) += g;
      grad(n.b)(0, 0) += g.sum();
      return;
    case Op::AddColumn:
      grad(n.a) += g;
      grad(n.b) += g.rowwise().sum();
      return;
    case Op::MatMul:
      grad(n.a).noalias() += g * values_[n.b].transpose();
      grad(n.b).noalias() += values_[n.a].transpose() * g;
      return;
    case Op::Pow: {
      const double p = n.constant;
      if (p == 2.0) {
        grad(n.a).array() += 2.0 * g.array() * values_[n.a].array();
      } else {
        grad(n.a).array() += g.array() * p * values_[n.a].array().pow(p - 1.0);
      }
      return;
    }
    case Op::Unary:
      grad(n.a).array() += g.array() * values_[n.a].unaryExpr(n.function->deriv).array();
      return;
    case Op::Spline: {
      const SplineCache& cache = *n.cache;
      const Matrix& c = values_[n.b];
      Matrix& gx = grad(n.a);
      Matrix& gc = grad(n.b);
      const auto m = cache.values.rows();
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        const int first = cache.first[static_cast<std::size_t>(j)];
        double slope = 0.0;
        for (Eigen::Index r = 0; r < m; ++r) {
          gc(first + r, 0) += g(0, j) * cache.values(r, j);
          slope += c(first + r, 0) * cache.slopes(r, j);
        }
        gx(0, j) += g(0, j) * slope;
      }
      return;
    }
    case Op::Harmonics: {
      const int grid = n.index;
      const bool sine = n.constant != 0.0;
      Matrix& gx = grad(n.a);
      for_each_harmonic(values_[n.a], grid,
                        [&](Eigen::Index r, Eigen::Index j, int k, double c, double s) {
                          const double up = g(r * grid + (k - 1), j);
                          gx(r, j) += sine ? up * k * c : -up * k * s;
                        });
      return;
    }
    case Op::Linear: grad(n.a) += (n.sparse->transpose() * g.transpose()).transpose(); return;
    case Op::Row: grad(n.a).row(n.index) += g; return;
    case Op::Sum: grad(n.a).array() += g(0, 0); return;
  }
}

std::vector<Matrix> Tape::backward(NodeId output) {
  if (output.index >= nodes_.size()) {
    throw ShapeError(
        fmt::format("output index {} out of range for tape of {} nodes", output.index, size()));
  }
  // Nodes that depend on a leaf; everything else needs no adjoint.
  std::vector<char> live(nodes_.size(), 0);
  for (std::size_t i = 0; i <= output.index; ++i) {
    const Node& n = nodes_[i];
    switch (n.op) {
      case Op::Leaf: live[i] = 1; break;
      case Op::Constant: break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::MulScalar:
      case Op::AddScalar:
      case Op::AddColumn:
      case Op::MatMul:
      case Op::Spline:
        live[i] = live[n.a] || live[n.b];
        break;
      default: live[i] = live[n.a]; break;
    }
  }
  adjoints_.resize(nodes_.size());
  for (std::size_t i = 0; i <= output.index; ++i) {
    if (live[i]) adjoints_[i].setZero(values_[i].rows(), values_[i].cols());
  }
  // Adjoints of dead operands are written but never read; give them storage.
  for (std::size_t i = 0; i <= output.index; ++i) {
    if (!live[i]) adjoints_[i].setZero(values_[i].rows(), values_[i].cols());
  }
  if (live[output.index]) adjoints_[output.index].setOnes();
  for (std::size_t i = output.index + 1; i-- > 0;) {
    if (live[i]) accumulate(i);
  }
  std::vector<Matrix> grads;
  grads.reserve(leaves_.size());
  for (NodeId l : leaves_) {
    if (l.index <= output.index) {
      grads.push_back(adjoints_[l.index]);
    } else {
      grads.push_back(Matrix::Zero(values_[l.index].rows(), values_[l.index].cols()));
    }
  }
  return grads;
}

double grad_check(Tape& tape, std::span<const Matrix> leaf_values, NodeId output, double step) {
  if (!(step > 0.0 && step <= 1e-2)) {
    throw DomainError(fmt::format("grad_check step must lie in (0, 1e-2], got {}", step));
  }
  std::vector<Matrix> values(leaf_values.begin(), leaf_values.end());
  tape.forward(values);
  const std::vector<Matrix> analytic = tape.backward(output);
  double worst = 0.0;
  for (std::size_t l = 0; l < values.size(); ++l) {
    for (Eigen::Index e = 0; e < values[l].size(); ++e) {
      const double saved = values[l](e);
      values[l](e) = saved + step;
      tape.forward(values);
      const double up = tape.value(output).sum();
      values[l](e) = saved - step;
      tape.forward(values);
      const double down = tape.value(output).sum();
      values[l](e) = saved;
      const double fd = (up - down) / (2.0 * step);
      const double a = analytic[l](e);
      worst = std::max(worst, std::fabs(a - fd) / (std::fabs(a) + 1e-12));
    }
  }
  tape.forward(values);
  return worst;
}

}  // namespace kanc::ad
