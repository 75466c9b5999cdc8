#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <doctest.h>

#include "kanc/device/surrogate.hpp"
#include "kanc/error.hpp"
#include "kanc/eval/report.hpp"
#include "fixtures.hpp"

using namespace kanc;
using namespace kanc::eval;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream s;
  s << is.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("sweep of a constant model") {
  const DerivativeCurves c = derivative_sweep([](double, double) { return 3e-5; }, 0.4);
  CHECK(c.vg.size() == 821);
  CHECK(c.vg.back() == 0.82);
  for (double g : c.gm) CHECK(g == 0.0);
  nn::Network net = nn::Network::initialize(nn::preset("MLP1", device::Field::DrainCurrent), 0);
  nn::assign(net, Eigen::VectorXd::Zero(nn::flatten(net).size()));
  for (double g : derivative_sweep(net, 0.8).gm) CHECK(g == 0.0);
}

TEST_CASE("sweep of a quadratic current") {
  // y = ln(V_G^2 + 1e-12), so I = V_G^2 + 1e-12 and g_m = 2 V_G
  const DerivativeCurves c =
      derivative_sweep([](double, double vg) { return std::exp(std::log(vg * vg + 1e-12)); }, 0.4);
  for (std::size_t k = 1; k + 1 < c.vg.size(); ++k) {
    CHECK(c.gm[k] == doctest::Approx(2.0 * c.vg[k]).epsilon(1e-6).scale(1e-9));
    CHECK(c.gm2[k] == doctest::Approx(2.0).epsilon(1e-5));
  }
}

TEST_CASE("sweep of the surrogate matches its closed-form transconductance") {
  for (double vd : {kSweepDrainLow, kSweepDrainHigh}) {
    const DerivativeCurves c =
        derivative_sweep([](double d, double g) { return device::surrogate_eval(d, g).id; }, vd);
    for (std::size_t k = 1; k + 1 < c.vg.size(); ++k) {
      const double want = device::surrogate_gm(vd, c.vg[k]);
      CHECK(std::abs(c.gm[k] - want) <= 1e-3 * std::abs(want));
    }
  }
}

TEST_CASE("sweep preconditions") {
  const CurrentFn f = [](double, double) { return 1.0; };
  CHECK_THROWS_AS(derivative_sweep(f, 0.9), DomainError);
  CHECK_THROWS_AS(derivative_sweep(f, 0.4, 3), DomainError);
  CHECK(derivative_sweep(f, 0.4, 5).vg.size() == 165);
  const nn::Network q = nn::Network::initialize(nn::preset("MLP1", device::Field::SourceCharge), 0);
  CHECK_THROWS_AS(derivative_sweep(q, 0.4), ConfigError);
}

TEST_CASE("waviness examples") {
  CHECK(waviness(std::vector<double>{1, 2, 3, 4}) == 0.0);
  CHECK(waviness(std::vector<double>{0, 2, 5, 3, -1}) == 0.0);
  CHECK(waviness(std::vector<double>{4, 1, 0, 2}) == 0.0);
  std::vector<double> s;
  for (int k = 0; k <= 800; ++k) s.push_back(std::sin(4.0 * std::numbers::pi * k / 800.0));
  CHECK(waviness(s) == doctest::Approx(4.0).epsilon(1e-9));
  CHECK_THROWS_AS(waviness(std::vector<double>{1, 2}), DomainError);
}

TEST_CASE("waviness is zero on monotone curves and never negative") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> up{u(rng)}, any{u(rng)};
    for (int k = 0; k < 40; ++k) {
      up.push_back(up.back() + u(rng));
      any.push_back(u(rng));
    }
    CHECK(waviness(up) == 0.0);
    std::vector<double> down(up.rbegin(), up.rend());
    CHECK(waviness(down) == 0.0);
    CHECK(waviness(any) >= 0.0);
  }
}

TEST_CASE("report of the closed-form source charge") {
  const auto ds = device::generate_dataset(20);
  const nn::Checkpoint oracle = testing::source_charge_oracle();
  const EvalReport r = make_report(std::vector{oracle}, ds);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].train_mape < 1e-12);
  CHECK(r.rows[0].test_mape < 1e-12);
  CHECK(std::isnan(r.rows[0].waviness_low));
  CHECK(r.curves.empty());
  CHECK(r.seed_stats.empty());
}

TEST_CASE("report files") {
  const auto ds = device::generate_dataset(50);
  std::vector<nn::Checkpoint> ckpts;
  for (std::uint64_t seed : {0u, 1u}) {
    nn::Checkpoint c{nn::Network::initialize(nn::preset("FKAN1", device::Field::DrainCurrent), seed), {}};
    c.meta.seed = seed;
    c.meta.target = "I_D";
    ckpts.push_back(c);
  }
  ckpts.push_back(testing::source_charge_oracle());
  const EvalReport r = make_report(ckpts, ds);
  CHECK(r.rows.size() == 3);
  CHECK(r.curves.size() == 4);
  REQUIRE(r.seed_stats.size() == 1);
  CHECK(r.seed_stats[0].target == "I_D");
  CHECK(r.seed_stats[0].runs == 2);

  const auto dir = std::filesystem::temp_directory_path() / "kanc_report_test";
  std::filesystem::remove_all(dir);
  const auto first = write_report(r, dir / "a");
  const auto second = write_report(make_report(ckpts, ds), dir / "b");
  REQUIRE(first.size() == 6);
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].filename() == second[i].filename());
    CHECK(slurp(first[i]) == slurp(second[i]));
  }
  const std::string summary = slurp(dir / "a" / "summary.csv");
  CHECK(summary.find("target,step,seed,train_mape,test_mape,waviness_0.4V,waviness_0.8V\n") != std::string::npos);
  CHECK(slurp(first.back()).find("V_G,g_m,g_m2\n0,") != std::string::npos);
  std::filesystem::remove_all(dir);
}
