#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace kanc::spline {

inline constexpr int kMaxOrder = 7;

// Uniform knot vector over [lo, hi] with `grid` cells, extended by `order`
// uniform steps on each side. Holds grid + 2*order + 1 knots.
class KnotVector {
 public:
  KnotVector(int grid, int order, double lo = 0.0, double hi = 1.0);

  int grid() const { return grid_; }
  int order() const { return order_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double step() const { return step_; }
  int num_basis() const { return grid_ + order_; }

  std::span<const double> knots() const { return knots_; }
  double knot(int j) const { return knots_[static_cast<std::size_t>(j)]; }

  // Domain cell whose polynomial piece is used at x. Points outside the
  // domain map to the boundary cells, so evaluation extrapolates.
  int cell(double x) const;

  bool operator==(const KnotVector& other) const = default;

 private:
  int grid_;
  int order_;
  double lo_;
  double hi_;
  double step_;
  std::vector<double> knots_;
};

// The order+1 basis functions that are nonzero on one cell, evaluated at x:
// value[r] = B_{first + r}(x).
struct LocalBasis {
  int first = 0;
  int count = 0;
  std::array<double, kMaxOrder + 1> value{};
  std::array<double, kMaxOrder + 1> slope{};
};

// Cox-de Boor recurrence restricted to the cell of x. Slopes are only
// filled when `with_slope` is set.
void local_basis(const KnotVector& knots, double x, LocalBasis& out, bool with_slope = false);

// Dense basis vector of length G+k.
Eigen::VectorXd basis_eval(const KnotVector& knots, double x);
Eigen::VectorXd basis_slope(const KnotVector& knots, double x);

double silu(double x);
double silu_deriv(double x);

// phi(x) = w_b * silu(x) + w_s * sum_i c_i B_i(x)
struct SplineActivation {
  KnotVector knots;
  Eigen::VectorXd coeffs;
  double w_b = 1.0;
  double w_s = 1.0;

  explicit SplineActivation(KnotVector kv);
  SplineActivation(KnotVector kv, Eigen::VectorXd c, double wb, double ws);
};

// Spline part only (no base function, no w_s).
double spline_curve(const SplineActivation& act, double x);
double spline_eval(const SplineActivation& act, double x);
double spline_deriv(const SplineActivation& act, double x);

// Transfers the activation onto a grid with new_grid cells by a least-squares
// fit of the spline part on a dense uniform sample of the domain. Throws
// RefinementError when new_grid < current grid or the system is rank deficient.
SplineActivation refine(const SplineActivation& act, int new_grid);
// Same, with the sample stretched to also cover [sample_lo, sample_hi], so the
// extrapolated pieces keep matching where inputs actually fall.
SplineActivation refine(const SplineActivation& act, int new_grid, double sample_lo,
                        double sample_hi);

}  // namespace kanc::spline
