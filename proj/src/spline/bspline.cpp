#include "kanc/spline/bspline.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "kanc/error.hpp"

namespace kanc::spline {

KnotVector::KnotVector(int grid, int order, double lo, double hi)
    : grid_(grid), order_(order), lo_(lo), hi_(hi), step_((hi - lo) / grid) {
  if (grid < 1) throw DomainError(fmt::format("grid size must be positive, got {}", grid));
  if (order < 0 || order > kMaxOrder)
    throw DomainError(fmt::format("spline order must be in [0, {}], got {}", kMaxOrder, order));
  if (!(hi > lo)) throw DomainError("knot domain must satisfy lo < hi");
  knots_.resize(static_cast<std::size_t>(grid + 2 * order + 1));
  for (int j = 0; j < static_cast<int>(knots_.size()); ++j) {
    knots_[static_cast<std::size_t>(j)] = lo + (j - order) * step_;
  }
}

int KnotVector::cell(double x) const {
  const double t = std::floor((x - lo_) / step_);
  if (!(t >= 0.0)) return 0;  // also catches NaN
  if (t >= grid_) return grid_ - 1;
  return static_cast<int>(t);
}

namespace {

// NURBS-book BasisFuns for span index `span` and degree p. Writes p+1 values.
void basis_funs(const KnotVector& kv, int span, double x, int p, double* out) {
  std::array<double, kMaxOrder + 2> left{};
  std::array<double, kMaxOrder + 2> right{};
  out[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - kv.knot(span + 1 - j);
    right[j] = kv.knot(span + j) - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

}  // namespace

void local_basis(const KnotVector& kv, double x, LocalBasis& out, bool with_slope) {
  const int k = kv.order();
  const int c = kv.cell(x);
  const int span = k + c;
  out.first = c;
  out.count = k + 1;
  basis_funs(kv, span, x, k, out.value.data());
  if (!with_slope) return;
  if (k == 0) {
    out.slope[0] = 0.0;
    return;
  }
  // Degree k-1 functions nonzero on this cell are B_{c+1} .. B_{c+k}.
  std::array<double, kMaxOrder + 1> lower{};
  basis_funs(kv, span, x, k - 1, lower.data());
  for (int r = 0; r <= k; ++r) {
    const int i = c + r;
    double d = 0.0;
    if (r >= 1) d += k * lower[r - 1] / (kv.knot(i + k) - kv.knot(i));
    if (r <= k - 1) d -= k * lower[r] / (kv.knot(i + k + 1) - kv.knot(i + 1));
    out.slope[r] = d;
  }
}

Eigen::VectorXd basis_eval(const KnotVector& kv, double x) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(kv.num_basis());
  LocalBasis lb;
  local_basis(kv, x, lb);
  for (int r = 0; r < lb.count; ++r) b[lb.first + r] = lb.value[r];
  return b;
}

Eigen::VectorXd basis_slope(const KnotVector& kv, double x) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(kv.num_basis());
  LocalBasis lb;
  local_basis(kv, x, lb, true);
  for (int r = 0; r < lb.count; ++r) b[lb.first + r] = lb.slope[r];
  return b;
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_deriv(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

SplineActivation::SplineActivation(KnotVector kv)
    : knots(std::move(kv)), coeffs(Eigen::VectorXd::Zero(knots.num_basis())) {}

SplineActivation::SplineActivation(KnotVector kv, Eigen::VectorXd c, double wb, double ws)
    : knots(std::move(kv)), coeffs(std::move(c)), w_b(wb), w_s(ws) {
  if (coeffs.size() != knots.num_basis()) {
    throw ShapeError(fmt::format("spline needs {} coefficients, got {}", knots.num_basis(),
                                 coeffs.size()));
  }
}

double spline_curve(const SplineActivation& act, double x) {
  LocalBasis lb;
  local_basis(act.knots, x, lb);
  double s = 0.0;
  for (int r = 0; r < lb.count; ++r) s += act.coeffs[lb.first + r] * lb.value[r];
  return s;
}

double spline_eval(const SplineActivation& act, double x) {
  return act.w_b * silu(x) + act.w_s * spline_curve(act, x);
}

double spline_deriv(const SplineActivation& act, double x) {
  LocalBasis lb;
  local_basis(act.knots, x, lb, true);
  double s = 0.0;
  for (int r = 0; r < lb.count; ++r) s += act.coeffs[lb.first + r] * lb.slope[r];
  return act.w_b * silu_deriv(x) + act.w_s * s;
}

SplineActivation refine(const SplineActivation& act, int new_grid) {
  return refine(act, new_grid, act.knots.lo(), act.knots.hi());
}

SplineActivation refine(const SplineActivation& act, int new_grid, double sample_lo,
                        double sample_hi) {
  const KnotVector& old_kv = act.knots;
  if (!std::isfinite(sample_lo) || !std::isfinite(sample_hi)) {
    throw RefinementError("refinement sample range must be finite");
  }
  const double lo = std::min(sample_lo, old_kv.lo());
  const double hi = std::max(sample_hi, old_kv.hi());
  if (new_grid < old_kv.grid()) {
    throw RefinementError(
        fmt::format("cannot refine from G={} down to G={}", old_kv.grid(), new_grid));
  }
  KnotVector kv(new_grid, old_kv.order(), old_kv.lo(), old_kv.hi());
  const int m = kv.num_basis();
  // keep the in-domain sample density when the range is widened
  const double widen = (hi - lo) / (kv.hi() - kv.lo());
  const int n = static_cast<int>(std::ceil((10 * m) * widen)) + 1;
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n, m);
  Eigen::VectorXd target(n);
  LocalBasis lb;
  for (int s = 0; s < n; ++s) {
    const double x = lo + (hi - lo) * s / (n - 1);
    local_basis(kv, x, lb);
    for (int r = 0; r < lb.count; ++r) design(s, lb.first + r) = lb.value[r];
    target[s] = spline_curve(act, x);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < m) {
    throw RefinementError(
        fmt::format("least-squares transfer to G={} is rank deficient ({} < {})", new_grid,
                    qr.rank(), m));
  }
  Eigen::VectorXd coeffs = qr.solve(target);
  return SplineActivation(std::move(kv), std::move(coeffs), act.w_b, act.w_s);
}

}  // namespace kanc::spline
