#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <doctest.h>

#include "kanc/error.hpp"
#include "kanc/eval/metrics.hpp"
#include "kanc/symbolic/regression.hpp"
#include "fixtures.hpp"

using namespace kanc;
using namespace kanc::symbolic;

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return x;
}

std::vector<double> map(const std::vector<double>& x, double (*f)(double)) {
  std::vector<double> y;
  for (double v : x) y.push_back(f(v));
  return y;
}

double fitted(const EdgeFit& fit, double x) { return fit.c * find_function(fit.function)(fit.a * x + fit.b) + fit.d; }

nn::Network random_kan(std::vector<int> widths, std::uint64_t seed) {
  nn::Network net = nn::Network::initialize(nn::kan_spec(std::move(widths), 5, nn::Conversion::ChargeScale), seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.3);
  Eigen::VectorXd p = nn::flatten(net);
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = n(rng);
  nn::assign(net, p);
  return net;
}

Eigen::MatrixXd random_inputs(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 0.82);
  Eigen::MatrixXd x(2, n);
  for (Eigen::Index e = 0; e < x.size(); ++e) x(e) = u(rng);
  return x;
}

}  // namespace

TEST_CASE("fit recovers a shifted sine") {
  const auto x = linspace(0.0, 1.0, 50);
  std::vector<double> y;
  for (double v : x) y.push_back(std::sin(3.0 * v + 1.0));
  const EdgeFit fit = fit_basic(x, y, find_function("sin"));
  CHECK(fit.r2 > 0.999);
  // sin has sign and phase symmetries, so compare the curve instead
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(fitted(fit, x[k]) == doctest::Approx(y[k]).epsilon(1e-6));
  CHECK(std::abs(fit.a) == doctest::Approx(3.0));
}

TEST_CASE("constant samples") {
  const auto x = linspace(0.0, 1.0, 10);
  const std::vector<double> y(10, 5.0);
  const EdgeFit fit = fit_basic(x, y, find_function("tanh"));
  CHECK(fit.c == 0.0);
  CHECK(fit.d == 5.0);
  CHECK(fit.r2 == 1.0);
  const auto ranked = suggest(x, y);
  for (const EdgeFit& f : ranked) CHECK(f.r2 == 1.0);
  CHECK(ranked.front().function == "x");
}

TEST_CASE("the true family outranks a near miss") {
  const auto x = linspace(0.0, 1.0, 40);
  const auto y = map(x, [](double v) { return v * v; });
  const EdgeFit sq = fit_basic(x, y, find_function("x^2"));
  const EdgeFit th = fit_basic(x, y, find_function("tanh"));
  CHECK(sq.r2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sq.r2 > th.r2);
  CHECK(th.r2 < 0.999);
}

TEST_CASE("suggest ranking") {
const auto x = linspace(-1.0, 1.0, 30);
  SUBCASE("sine samples") {
    // cos(u) = sin(u + pi/2) fits equally well, so either may come first
    const auto u = linspace(0.0, 1.0, 50);
    std::vector<double> y;
    for (double v : u) y.push_back(std::sin(3.0 * v + 1.0));
    const auto ranked = suggest(u, y);
    CHECK((ranked.front().function == "sin" || ranked.front().function == "cos"));
    CHECK(ranked.front().r2 > 0.9999);
  }
  SUBCASE("linear samples") {
    std::vector<double> y;
    for (double v : x) y.push_back(2.5 * v - 1.0);
    const auto ranked = suggest(x, y);
    CHECK(ranked.front().r2 == doctest::Approx(1.0).epsilon(1e-12));
    const auto lin = std::find_if(ranked.begin(), ranked.end(), [](const EdgeFit& f) { return f.function == "x"; });
    CHECK(lin->r2 == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("descending order") {
    std::vector<double> y;
    for (double v : x) y.push_back(std::exp(v) * std::cos(3 * v));
    const auto ranked = suggest(x, y);
    REQUIRE(ranked.size() == library().size());
    for (std::size_t i = 1; i < ranked.size(); ++i) CHECK(ranked[i - 1].r2 >= ranked[i].r2);
  }
}

TEST_CASE("R^2 is invariant to affine rescaling of y") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto x = linspace(0.0, 1.0, 25);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> y, y2;
    const double s = 0.1 + 5.0 * std::abs(u(rng));
    const double t = 10.0 * u(rng);
    for (double v : x) {
      y.push_back(std::tanh(2 * v) + 0.3 * v * v + 0.05 * u(rng));
      y2.push_back(s * y.back() + t);
    }
    for (const char* name : {"x", "tanh", "sin", "exp"}) {
      CAPTURE(name);
      CHECK(fit_basic(x, y2, find_function(name)).r2 ==
            doctest::Approx(fit_basic(x, y, find_function(name)).r2).epsilon(1e-8));
    }
  }
}

TEST_CASE("fit preconditions") {
  const auto x = linspace(0.0, 1.0, 7);
  CHECK_THROWS_AS(fit_basic(x, x, find_function("x")), DomainError);
  const std::vector<double> flat(10, 0.3);
  CHECK_THROWS_AS(fit_basic(flat, linspace(0, 1, 10), find_function("x")), DomainError);
}

TEST_CASE("fixing edges") {
  nn::Network net = random_kan({2, 3, 1}, 1);
  SUBCASE("identity") {
    EdgeFit f;
    f.edge = {0, 1, 0};
    f.function = "x";
    f.a = 1.0;
    f.c = 1.0;
    fix_edge(net, f);
    const nn::KanEdge& e = net.kan[0].edge(1, 0);
    for (double v : {-2.0, 0.0, 0.37, 5.0}) CHECK(e(v) == v);
    CHECK_THROWS_AS(fix_edge(net, f), DomainError);
  }
  SUBCASE("unknown edges and functions") {
    EdgeFit f;
    f.function = "x";
    f.edge = {2, 0, 0};
    CHECK_THROWS_AS(fix_edge(net, f), ConfigError);
    f.edge = {0, 3, 0};
    CHECK_THROWS_AS(fix_edge(net, f), ConfigError);
    f.edge = {0, 0, 0};
    f.function = "gamma";
    CHECK_THROWS_AS(fix_edge(net, f), ConfigError);
  }
  SUBCASE("edge ids walk layer by layer") {
    const auto ids = edge_ids(net);
    REQUIRE(ids.size() == 9);
    for (std::size_t k = 0; k < ids.size(); ++k) CHECK(edge_index(net, ids[k]) == static_cast<int>(k));
  }
}

TEST_CASE("output change after a fix equals the fit residual") {
  // an output-layer edge feeds the output directly, so the change at each
  // sample is exactly the least-squares residual
  nn::Network net = random_kan({2, 3, 1}, 2);
  std::mt19937_64 rng(9);
  const Eigen::MatrixXd x = random_inputs(rng, 200);
  const Eigen::RowVectorXd before = nn::predict(net, x);
  const auto samples = edge_samples(net, x);
  const EdgeSamples& s = samples[6];
  REQUIRE(s.edge == EdgeId{1, 0, 0});
  EdgeFit fit = suggest(s.x, s.y).front();
  fit.edge = s.edge;
  fix_edge(net, fit);
  const Eigen::RowVectorXd after = nn::predict(net, x);
  double mean = 0.0;
  for (double v : s.y) mean += v;
  mean /= static_cast<double>(s.y.size());
  double ss_tot = 0.0;
  for (double v : s.y) ss_tot += (v - mean) * (v - mean);
  const double expected = (1.0 - fit.r2) * ss_tot;
  CHECK((after - before).squaredNorm() == doctest::Approx(expected).epsilon(1e-6).scale(1e-20));
}

TEST_CASE("formula and network agree") {
  std::mt19937_64 rng(17);
  for (const auto& widths : {std::vector{2, 3, 1}, std::vector{2, 2, 2, 1}}) {
    nn::Network net = random_kan(widths, 3);
    const Eigen::MatrixXd fit_x = random_inputs(rng, 300);
    for (const EdgeFit& f : best_fits(net, fit_x, 0)) fix_edge(net, f);
    REQUIRE(all_fixed(net));
    const Formula formula = extract_formula(net, "Q_D");
    const Eigen::MatrixXd x = random_inputs(rng, 1000);
    const Eigen::RowVectorXd y = nn::predict(net, x);
    for (Eigen::Index n = 0; n < x.cols(); ++n) {
      const double want = y[n];
      CHECK(std::abs(formula.evaluate_y(x(0, n), x(1, n)) - want) <= 1e-10 * std::max(1.0, std::abs(want)));
    }
    // structured export round trip
    const ExprPtr back = from_json(to_json(*formula.y));
    const std::array<double, 2> v{0.3, 0.6};
    CHECK(evaluate(*back, v) == evaluate(*formula.y, v));
    CHECK(render(*back) == render(*formula.y));
  }
}

TEST_CASE("rendering") {
  SUBCASE("single sine edge") {
    nn::Network net = nn::Network::initialize(nn::kan_spec({1, 1}, 3, nn::Conversion::ChargeScale, 1.0), 0);
    net.kan[0].bias.setZero();
    fix_edge(net, EdgeFit{{0, 0, 0}, "sin", 1.0, 0.0, 2.0, 0.0, 1.0, false});
    CHECK(extract_formula(net, "Q_S").text() == "Q_S = 2.0000*sin(1.0000*V_D)");
  }
  SUBCASE("parallel edges sum") {
    nn::Network net = nn::Network::initialize(nn::kan_spec({2, 1}, 3, nn::Conversion::ExpCurrent, 1.0), 0);
    net.kan[0].bias.setZero();
    fix_edge(net, EdgeFit{{0, 0, 0}, "x", 1.0, 0.0, 1.0, 0.0, 1.0, false});
    fix_edge(net, EdgeFit{{0, 0, 1}, "x^2", 1.0, 0.0, 1.0, 0.0, 1.0, false});
    const Formula f = extract_formula(net, "I_D");
    CHECK(f.text() == "I_D = exp(1.0000*V_D + 1.0000*(1.0000*V_G)^2)");
    for (double t : {0.1, 0.5, 0.8}) CHECK(f.evaluate_y(t, t) == doctest::Approx(t + t * t));
  }
  SUBCASE("negative constants") {
    const ExprPtr e = add({scale(-1.5, variable(1)), constant(-0.25)});
    CHECK(render(*e) == "-1.5000*V_G - 0.2500");
  }
  SUBCASE("constant folding") {
    const ExprPtr e = add({apply(find_function("exp"), constant(0.0)), add({variable(0), constant(2.0)})});
    CHECK(render(*e) == "V_D + 3.0000");
  }
}

TEST_CASE("extraction needs every edge fixed") {
  nn::Network net = random_kan({2, 2, 1}, 4);
  CHECK_THROWS_AS(extract_formula(net, "Q_S"), DomainError);
}

TEST_CASE("forward-mode derivative matches finite differences") {
  std::mt19937_64 rng(23);
  nn::Network net = random_kan({2, 3, 1}, 5);
  for (const EdgeFit& f : best_fits(net, random_inputs(rng, 200), 0)) fix_edge(net, f);
  const ExprPtr e = network_expression(net);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd p = random_inputs(rng, 1);
    for (int wrt : {0, 1}) {
      std::array<double, 2> v{p(0, 0), p(1, 0)};
      const Dual d = differentiate(*e, v, wrt);
      v[static_cast<std::size_t>(wrt)] += h;
      const double up = evaluate(*e, v);
      v[static_cast<std::size_t>(wrt)] -= 2 * h;
      const double down = evaluate(*e, v);
      CHECK(d.deriv == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5).scale(1e-6));
    }
  }
}

TEST_CASE("iterative regression rounds") {
  const auto ds = device::generate_dataset(50);
  nn::Checkpoint ckpt{nn::Network::initialize(nn::kan_spec({2, 6, 1}, 4, nn::Conversion::ChargeScale), 1), {}};
  ckpt.meta.target = "Q_S";
  SrConfig c;
  c.retrain_epochs = 3;
  SUBCASE("k = 3 on 18 edges") {
    c.k = 3;
    const SrResult r = iterative_sr(ckpt, ds, c);
    REQUIRE(r.rounds.size() == 6);
    for (const SrRound& round : r.rounds) CHECK(round.fixed.size() == 3);
    CHECK(r.fits.size() == 18);
    CHECK(all_fixed(r.checkpoint.network));
    CHECK(r.formula.has_value());
  }
  SUBCASE("last round takes the remainder") {
    c.k = 4;
    const SrResult r = iterative_sr(ckpt, ds, c);
    REQUIRE(r.rounds.size() == 5);
    CHECK(r.rounds.back().fixed.size() == 2);
  }
  SUBCASE("least accurate edges go first") {
    c.k = 5;
    const SrResult r = iterative_sr(ckpt, ds, c);
    const auto& first = r.rounds.front().fixed;
    for (std::size_t i = 1; i < first.size(); ++i) CHECK(first[i - 1].r2 <= first[i].r2);
  }
  SUBCASE("all edges with no retraining is the one-shot pipeline") {
    c.k = 0;
    c.retrain_epochs = 0;
    const SrResult r = iterative_sr(ckpt, ds, c);
    CHECK(r.rounds.size() == 1);
    nn::Network oneshot = ckpt.network;
    for (const EdgeFit& f : best_fits(oneshot, train::grid_targets(ds, device::Field::SourceCharge).inputs,
                                      kDefaultFitSamples)) {
      fix_edge(oneshot, f);
    }
    CHECK(nn::flatten(r.checkpoint.network) == nn::flatten(oneshot));
    CHECK(r.formula->text() == extract_formula(oneshot, "Q_S").text());
    CHECK(posthoc_sr(ckpt, ds).formula->text() == r.formula->text());
  }
  SUBCASE("non-KAN checkpoints are rejected") {
    nn::Checkpoint mlp{nn::Network::initialize(nn::preset("MLP1", device::Field::SourceCharge), 0), {}};
    mlp.meta.target = "Q_S";
    CHECK_THROWS_AS(iterative_sr(mlp, ds, c), ConfigError);
  }
}

TEST_CASE("variable ablation") {
  const auto ds = device::generate_dataset(50);
  const nn::Checkpoint oracle = testing::source_charge_oracle();
  const double base = eval::split_mape(oracle.network, ds, device::Field::SourceCharge).train;
  CHECK(base < 1e-12);
  SUBCASE("dead input") {
    nn::Network net = oracle.network;
    ablate_variable(net, parse_variable("V_D"));
    CHECK(eval::split_mape(net, ds, device::Field::SourceCharge).train == doctest::Approx(base).epsilon(1e-9).scale(1e-9));
  }
  SUBCASE("live input, applied twice") {
    nn::Network once = oracle.network;
    ablate_variable(once, parse_variable("V_G"));
    const double m1 = eval::split_mape(once, ds, device::Field::SourceCharge).train;
    CHECK(m1 > 0.5);
    nn::Network twice = once;
    ablate_variable(twice, parse_variable("V_G"));
    CHECK(nn::flatten(twice) == nn::flatten(once));
  }
  SUBCASE("unknown variable") {
    nn::Network net = oracle.network;
    CHECK_THROWS_AS(parse_variable("V_S"), ConfigError);
    CHECK_THROWS_AS(ablate_variable(net, 2), ConfigError);
  }
}
