#include <cmath>
#include <random>

#include <doctest.h>

#include "kanc/error.hpp"
#include "kanc/spline/bspline.hpp"

using namespace kanc::spline;

namespace {

// Textbook recursive Cox-de Boor over the full knot vector; valid inside the domain.
double oracle_basis(const KnotVector& kv, int i, int k, double x) {
  const auto t = kv.knots();
  if (k == 0) return (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
  const double left = (x - t[i]) / (t[i + k] - t[i]) * oracle_basis(kv, i, k - 1, x);
  const double right = (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * oracle_basis(kv, i + 1, k - 1, x);
  return left + right;
}

SplineActivation random_activation(std::mt19937_64& rng, int grid, int order = 3) {
  std::normal_distribution<double> n(0.0, 1.0);
  SplineActivation act{KnotVector(grid, order)};
  for (Eigen::Index i = 0; i < act.coeffs.size(); ++i) act.coeffs[i] = n(rng);
  act.w_b = n(rng);
  act.w_s = n(rng);
  return act;
}

}  // namespace

TEST_CASE("knot vector layout") {
  const KnotVector kv(4, 3);
  CHECK(kv.knots().size() == 4 + 2 * 3 + 1);
  CHECK(kv.num_basis() == 7);
  for (std::size_t j = 1; j < kv.knots().size(); ++j) {
    CHECK(kv.knots()[j] - kv.knots()[j - 1] == doctest::Approx(0.25).epsilon(1e-12));
  }
  CHECK(kv.knot(3) == doctest::Approx(0.0));
  CHECK(kv.knot(7) == doctest::Approx(1.0));
}

TEST_CASE("order 0 is an indicator and order 1 a hat") {
  const KnotVector k0(4, 0);
  const Eigen::VectorXd b0 = basis_eval(k0, 0.375);  // center of cell 1
  CHECK(b0.sum() == 1.0);
  CHECK(b0[1] == 1.0);

  const KnotVector k1(4, 1);
  const Eigen::VectorXd b1 = basis_eval(k1, 0.5);  // interior knot
  CHECK(b1.maxCoeff() == doctest::Approx(1.0));
  CHECK(b1.sum() == doctest::Approx(1.0));
  CHECK((b1.array() > 1e-14).count() == 1);
}

TEST_CASE("basis matches the recursive oracle and sums to one") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0 - 1e-12);
  for (int order : {1, 2, 3, 4}) {
    for (int grid : {1, 3, 8, 16}) {
      const KnotVector kv(grid, order);
      for (int s = 0; s < 20; ++s) {
        const double x = u(rng);
        const Eigen::VectorXd b = basis_eval(kv, x);
        REQUIRE(b.size() == grid + order);
        CHECK(b.sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK((b.array().abs() > 0.0).count() <= order + 1);
        for (int i = 0; i < kv.num_basis(); ++i) {
          CHECK(b[i] == doctest::Approx(oracle_basis(kv, i, order, x)).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("spline_eval cases") {
  SUBCASE("silu only") {
    SplineActivation act{KnotVector(5, 3)};
    act.w_s = 0.0;
    act.w_b = 1.0;
    CHECK(spline_eval(act, 0.0) == 0.0);
  }
  SUBCASE("unit coefficients give one inside the domain") {
    SplineActivation act{KnotVector(5, 3), Eigen::VectorXd::Ones(8), 0.0, 1.0};
    for (double x : {0.1, 0.37, 0.8}) CHECK(spline_eval(act, x) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("scaled silu far out") {
    SplineActivation act{KnotVector(5, 3), Eigen::VectorXd::Zero(8), 2.0, 0.0};
    CHECK(spline_eval(act, 10.0) == doctest::Approx(2.0 * 10.0 / (1.0 + std::exp(-10.0))));
    CHECK(spline_eval(act, 10.0) == doctest::Approx(19.999).epsilon(1e-4));
  }
}

TEST_CASE("spline_deriv") {
  SUBCASE("silu slope at zero") {
    SplineActivation act{KnotVector(5, 3), Eigen::VectorXd::Zero(8), 1.0, 0.0};
    CHECK(spline_deriv(act, 0.0) == doctest::Approx(0.5));
  }
  SUBCASE("constant spline has zero slope") {
    SplineActivation act{KnotVector(5, 3), Eigen::VectorXd::Constant(8, 2.5), 0.0, 1.0};
    for (double x : {0.11, 0.5, 0.93}) CHECK(spline_deriv(act, x) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("random activations against central differences") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      const SplineActivation act = random_activation(rng, 6);
      for (int s = 0; s < 20; ++s) {
        double x = u(rng);
        const double h = 1e-6;
        // stay clear of knots where the third derivative jumps
        if (std::abs(x * 6.0 - std::round(x * 6.0)) < 1e-3) continue;
        const double fd = (spline_eval(act, x + h) - spline_eval(act, x - h)) / (2.0 * h);
        const double a = spline_deriv(act, x);
        CHECK(std::abs(a - fd) <= 1e-5 * std::max(1.0, std::abs(a)));
      }
    }
  }
}

TEST_CASE("extrapolation continues the boundary pieces") {
  std::mt19937_64 rng(4);
  const SplineActivation act = random_activation(rng, 4);
  // value and slope are continuous across the domain edge
  for (double edge : {0.0, 1.0}) {
    CHECK(spline_curve(act, edge - 1e-9) == doctest::Approx(spline_curve(act, edge + 1e-9)).epsilon(1e-7));
  }
  CHECK(std::isfinite(spline_eval(act, -0.5)));
  CHECK(std::isfinite(spline_eval(act, 1.7)));
}

TEST_CASE("refinement") {
  std::mt19937_64 rng(9);
  SUBCASE("constant spline stays constant") {
    SplineActivation act{KnotVector(2, 3), Eigen::VectorXd::Constant(5, -0.7), 0.3, 1.0};
    const SplineActivation fine = refine(act, 4);
    for (int s = 0; s <= 50; ++s) {
      CHECK(spline_curve(fine, s / 50.0) == doctest::Approx(-0.7).epsilon(1e-10));
    }
    CHECK(fine.w_b == 0.3);
    CHECK(fine.coeffs.size() == 4 + 3);
  }
  SUBCASE("nested grids reproduce the coarse spline") {
    for (auto [from, to] : {std::pair{2, 4}, std::pair{4, 8}, std::pair{3, 12}}) {
      const SplineActivation act = random_activation(rng, from);
      const SplineActivation fine = refine(act, to);
      double worst = 0.0;
      for (int s = 0; s <= 1000; ++s) {
        const double x = s / 1000.0;
        worst = std::max(worst, std::abs(spline_eval(fine, x) - spline_eval(act, x)));
      }
      CHECK(worst < 1e-8);
    }
  }
  SUBCASE("identity refinement") {
    const SplineActivation act = random_activation(rng, 5);
    const SplineActivation same = refine(act, 5);
    CHECK((same.coeffs - act.coeffs).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("non-nested grids are only approximate") {
    const SplineActivation act = random_activation(rng, 8);
    const SplineActivation fine = refine(act, 12);
    double worst = 0.0;
    for (int s = 0; s <= 1000; ++s) {
      worst = std::max(worst, std::abs(spline_eval(fine, s / 1000.0) - spline_eval(act, s / 1000.0)));
    }
    CHECK(worst > 1e-8);
    CHECK(worst < 0.1);
  }
  SUBCASE("widened sample keeps nested refinement exact outside the domain") {
    const SplineActivation act = random_activation(rng, 2);
    const SplineActivation fine = refine(act, 8, -0.5, 1.5);
    for (double x : {-0.5, -0.2, 1.3, 1.5}) {
      CHECK(spline_eval(fine, x) == doctest::Approx(spline_eval(act, x)).epsilon(1e-8));
    }
  }
  SUBCASE("coarsening is rejected") {
    const SplineActivation act = random_activation(rng, 8);
    CHECK_THROWS_AS(refine(act, 4), kanc::RefinementError);
  }
}
