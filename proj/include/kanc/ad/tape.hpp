#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "kanc/spline/bspline.hpp"

namespace kanc::ad {

using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Handle to a node on a Tape.
struct NodeId {
  std::uint32_t index = 0;
  bool operator==(const NodeId&) const = default;
};

// Pointwise scalar map with its derivative.
struct UnaryFunction {
  std::string_view name;
  double (*value)(double);
  double (*deriv)(double);
};

namespace fn {
extern const UnaryFunction exp;
extern const UnaryFunction log;
extern const UnaryFunction sin;
extern const UnaryFunction cos;
extern const UnaryFunction tanh;
extern const UnaryFunction silu;
extern const UnaryFunction abs;
}  // namespace fn

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Scale,       // constant * a
  Shift,       // a + constant
  MulScalar,   // a * s, s is 1x1
  AddScalar,   // a + s, s is 1x1
  AddColumn,   // a + b broadcast over columns, b is rows x 1
  MatMul,
  Pow,         // a^constant
  Unary,
  Spline,      // sum_i c_i B_i(x), x is 1xN, c is (G+k)x1
  Harmonics,   // rows cos(k x_i) or sin(k x_i), k = 1..G
  Linear,      // (M a^T)^T for a 1xN row and sparse M
  Row,
  Sum,
};

std::string_view op_name(Op op);

// Reverse-mode differentiation over a static graph of dense matrices.
//
// Nodes are appended in topological order; building a node evaluates it
// immediately. forward() re-evaluates the whole graph after leaf values
// change, so a graph can be built once and reused across optimizer steps.
class Tape {
 public:
  Tape() = default;

  NodeId leaf(Matrix value);
  NodeId constant(Matrix value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId shift(NodeId a, double c);
  NodeId mul_scalar(NodeId a, NodeId s);
  NodeId add_scalar(NodeId a, NodeId s);
  NodeId add_column(NodeId a, NodeId column);
  NodeId matmul(NodeId a, NodeId b);
  NodeId pow(NodeId a, double exponent);
  NodeId unary(NodeId a, const UnaryFunction& f);
  NodeId exp(NodeId a) { return unary(a, fn::exp); }
  NodeId log(NodeId a) { return unary(a, fn::log); }
  NodeId sin(NodeId a) { return unary(a, fn::sin); }
  NodeId cos(NodeId a) { return unary(a, fn::cos); }
  NodeId tanh(NodeId a) { return unary(a, fn::tanh); }
  NodeId silu(NodeId a) { return unary(a, fn::silu); }
  NodeId abs(NodeId a) { return unary(a, fn::abs); }
  NodeId spline(NodeId x, NodeId coeffs, std::shared_ptr<const spline::KnotVector> knots);
  NodeId harmonics(NodeId x, int grid, bool sine);
  NodeId linear(NodeId a, std::shared_ptr<const SparseMatrix> op);
  NodeId row(NodeId a, int index);
  NodeId sum(NodeId a);

  std::size_t size() const { return nodes_.size(); }
  std::size_t num_leaves() const { return leaves_.size(); }
  std::span<const NodeId> leaves() const { return leaves_; }

  const Matrix& value(NodeId id) const { return values_[id.index]; }
  double scalar(NodeId id) const { return values_[id.index](0, 0); }
  Op op(NodeId id) const { return nodes_[id.index].op; }

  // Replaces leaf values (in leaf creation order) and re-evaluates every node.
  // Throws EvaluationError naming the first node whose value is not finite.
  void forward(std::span<const Matrix> leaf_values);
  // Re-evaluates with the current leaf values.
  void forward();
  void set_leaf(std::size_t leaf_index, const Matrix& value);

  // Gradient of the sum of the entries of `output` with respect to every leaf,
  // in leaf creation order. Requires a completed forward evaluation.
  std::vector<Matrix> backward(NodeId output);
  std::vector<Matrix> backward(std::size_t output_index) {
    return backward(NodeId{static_cast<std::uint32_t>(output_index)});
  }

 private:
  struct SplineCache;

  struct Node {
    Op op = Op::Constant;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    double constant = 0.0;
    int index = 0;
    const UnaryFunction* function = nullptr;
    std::shared_ptr<const spline::KnotVector> knots;
    std::shared_ptr<const SparseMatrix> sparse;
    std::shared_ptr<SplineCache> cache;
  };

  static Node make_node(Op op, std::uint32_t a = 0, std::uint32_t b = 0);
  NodeId push(Node node);
  void evaluate(std::size_t i);
  void check_finite(std::size_t i) const;
  void accumulate(std::size_t i);
  void require(bool condition, std::string_view what) const;

  std::vector<Node> nodes_;
  std::vector<Matrix> values_;
  std::vector<Matrix> adjoints_;
  std::vector<NodeId> leaves_;
};

// Max over leaf entries of |analytic - central difference| / (|analytic| + 1e-12),
// for the gradient of the sum of `output`. `step` must lie in (0, 1e-2].
double grad_check(Tape& tape, std::span<const Matrix> leaf_values, NodeId output, double step);

}  // namespace kanc::ad
