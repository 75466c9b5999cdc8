#include <cmath>
#include <numbers>

#include <doctest.h>

#include "kanc/error.hpp"
#include "kanc/train/trainer.hpp"

using namespace kanc;
using namespace kanc::train;

namespace {

TrainConfig quick(nn::Family family, device::Field target, int epochs) {
  TrainConfig c;
  c.family = family;
  c.target = target;
  c.step_mv = 50;
  c.epochs = epochs;
  return c;
}

}  // namespace

TEST_CASE("step decay schedule") {
  CHECK(step_decay_lr(0.002, 0.85, 2000, 1999) == 0.002);
  CHECK(step_decay_lr(0.002, 0.85, 2000, 2000) == doctest::Approx(0.0017));
  CHECK(step_decay_lr(0.002, 0.85, 2000, 60000) == doctest::Approx(1.53e-5).epsilon(5e-3));
  CHECK_THROWS_AS(step_decay_lr(0.002, 0.85, 0, 10), DomainError);
}

TEST_CASE("family defaults") {
  TrainConfig c;
  c.family = nn::Family::Mlp;
  CHECK(c.budget() == 5000);
  CHECK(c.initial_lr() == 0.005);
  c.target = device::Field::DrainCharge;
  CHECK(c.initial_lr() == 0.01);
  c.full_budget = true;
  CHECK(c.budget() == kMlpFullEpochs);
  c.family = nn::Family::Kan;
  CHECK(c.budget() == 1500);
  CHECK(c.initial_lr() == 1.0);
  c.target = device::Field::DrainCurrent;
  CHECK(c.initial_lr() == 0.1);
  c.family = nn::Family::Fkan;
  CHECK(c.budget() == 60000);
  c.full_budget = false;
  CHECK(c.budget() == 10000);
  CHECK(c.initial_lr() == 0.002);
}

TEST_CASE("config validation and parsing") {
  TrainConfig c;
  c.a = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.family = nn::Family::Kan;
  c.ladder = {2, 4, 4};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.ladder = {2, 8, 16};
  CHECK_NOTHROW(c.validate());
  c.arch = "MLP1";
  CHECK_THROWS_AS(c.validate(), ConfigError);

  const TrainConfig p = parse_config(
      "[train]\narch=KAN2\ntarget=Q_D\nstep=20\nseed=9\nepochs=40\nladder=2,4,8\nlr=0.5\n");
  CHECK(p.family == nn::Family::Kan);
  CHECK(p.arch == "KAN2");
  CHECK(p.target == device::Field::DrainCharge);
  CHECK(p.step_mv == 20);
  CHECK(p.seed == 9);
  CHECK(p.ladder == std::vector{2, 4, 8});
  CHECK(p.initial_lr() == 0.5);
  CHECK(parse_config(config_text(p)).ladder == p.ladder);
  CHECK(config_text(parse_config(config_text(p))) == config_text(p));
  CHECK_THROWS_AS(parse_config("family=MLP\nbogus=1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("family=MLP\nstep=7\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("family=MLP\nepochs=abc\n"), ConfigError);
}

TEST_CASE("zero budgets return the initialization") {
  const auto ds = device::generate_dataset(50);
  SUBCASE("MLP") {
    const TrainConfig c = quick(nn::Family::Mlp, device::Field::SourceCharge, 0);
    const TrainResult r = train::train(c, ds);
    CHECK(nn::flatten(r.checkpoint.network) == nn::flatten(initial_network(c)));
    CHECK(r.log.epoch.empty());
    CHECK(r.checkpoint.meta.epochs == 0);
  }
  SUBCASE("KAN with a single-grid ladder") {
    TrainConfig c = quick(nn::Family::Kan, device::Field::SourceCharge, 0);
    c.ladder = {16};
    const TrainResult r = train::train(c, ds);
    CHECK(r.checkpoint.network.spec.grid == std::vector{16, 16});
    const nn::Network fresh = nn::Network::initialize(nn::preset("KAN1", device::Field::SourceCharge), 0);
    CHECK(nn::flatten(r.checkpoint.network) == nn::flatten(fresh));
  }
}

TEST_CASE("bias-only model reaches a constant target") {
  // input fixed at zero, so only the bias matters
  nn::Network net = nn::Network::initialize(nn::mlp_spec({1, 1}, nn::Conversion::ChargeScale, 1.0), 0);
  const Problem p = mse_problem(Eigen::MatrixXd::Zero(1, 10), Eigen::RowVectorXd::Constant(10, 0.7));
  AdamSchedule s;
  s.adam.lr = 0.01;
  s.epochs = 200;
  const TrainResult r = train_adam(net, p, s);
  CHECK(r.checkpoint.meta.final_loss < 1e-6);
}

TEST_CASE("KAN [1,1] fits one sine period through the full ladder") {
  Eigen::MatrixXd x(1, 100);
  Eigen::RowVectorXd y(100);
  for (int i = 0; i < 100; ++i) {
    x(0, i) = i / 99.0;
    y[i] = std::sin(2.0 * std::numbers::pi * x(0, i));
  }
  nn::NetworkSpec spec = nn::kan_spec({1, 1}, 2, nn::Conversion::ChargeScale, 1.0);
  LbfgsOptions o;
  const std::vector<int> ladder{2, 4, 8, 12, 16};
  const TrainResult r = train_lbfgs(nn::Network::initialize(spec, 0), mse_problem(x, y), o, ladder, 300);
  CHECK(r.checkpoint.meta.final_loss < 1e-4);
  CHECK(r.checkpoint.network.spec.grid == std::vector{16});
  REQUIRE(r.log.loss_after_refine.size() == 4);
  for (std::size_t s = 0; s < 4; ++s) {
    CHECK(r.log.loss_after_refine[s] <= 1.5 * r.log.loss_before_refine[s]);
  }
  CHECK(r.log.stage_grid == ladder);
  for (std::size_t i = 1; i < r.log.epoch.size(); ++i) CHECK(r.log.epoch[i] == r.log.epoch[i - 1] + 1);
}

TEST_CASE("device trainers make progress and are deterministic") {
  const auto ds = device::generate_dataset(50);
  for (auto family : {nn::Family::Mlp, nn::Family::Kan, nn::Family::Fkan}) {
    CAPTURE(nn::family_name(family));
    TrainConfig c = quick(family, device::Field::DrainCharge, family == nn::Family::Kan ? 20 : 60);
    c.ladder = {2, 4};
    const TrainResult a = train::train(c, ds);
    const TrainResult b = train::train(c, ds);
    CHECK(a.log.loss == b.log.loss);
    CHECK(nn::flatten(a.checkpoint.network) == nn::flatten(b.checkpoint.network));
    REQUIRE(!a.log.loss.empty());
    CHECK(a.checkpoint.meta.final_loss < a.log.loss.front());
    CHECK_FALSE(a.log.diverged);
    CHECK(a.checkpoint.meta.target == "Q_D");
  }
}

TEST_CASE("plateau schedule halves the rate and stops at the floor") {
  // constant loss never improves
  nn::Network net = nn::Network::initialize(nn::mlp_spec({1, 1}, nn::Conversion::ChargeScale, 1.0), 0);
  Problem p{Eigen::MatrixXd::Zero(1, 3),
            [](ad::Tape& t, ad::NodeId y) { return t.add_scalar(t.scale(t.sum(y), 0.0), t.constant(Eigen::MatrixXd::Ones(1, 1))); }};
  AdamSchedule s;
  s.adam.lr = 1e-3;
  s.epochs = 100000;
  s.plateau_window = 10;
  const TrainResult r = train_adam(net, p, s);
  // improvement on epoch 0 only, then a halving every 11 epochs until lr < 1e-5
  CHECK(r.log.lr.front() == 1e-3);
  CHECK(r.log.lr.back() == doctest::Approx(1e-3 / 64));
  CHECK(r.log.epoch.size() == 1 + 7 * 11);
}

TEST_CASE("divergence keeps the last finite parameters") {
  // log of the output fails once the bias is pushed below zero
  nn::Network net = nn::Network::initialize(nn::mlp_spec({1, 1}, nn::Conversion::ChargeScale, 1.0), 0);
  net.dense[0].bias[0] = 0.05;
  Problem p{Eigen::MatrixXd::Zero(1, 2), [](ad::Tape& t, ad::NodeId y) { return t.sum(t.log(y)); }};
  AdamSchedule s;
  s.adam.lr = 0.02;
  s.epochs = 50;
  const TrainResult r = train_adam(net, p, s);
  CHECK(r.log.diverged);
  CHECK(std::isfinite(r.checkpoint.meta.final_loss));
  CHECK(r.checkpoint.network.dense[0].bias[0] > 0.0);
  CHECK(r.log.epoch.size() < 50);
}

TEST_CASE("training log text") {
  const auto ds = device::generate_dataset(50);
  const TrainResult r = train::train(quick(nn::Family::Mlp, device::Field::SourceCharge, 3), ds);
  const std::string text = log_text(r.log);
  CHECK(text.find("# plateau_window=500\n") != std::string::npos);
  CHECK(text.find("epoch,loss,lr,stage\n0,") != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(r.log.settings.size()) + 1 + 1 + 3);
}

TEST_CASE("quantiles") {
  Quantiles q = quantiles({0.03});
  CHECK(q.min == 0.03);
  CHECK(q.median == 0.03);
  CHECK(q.max == 0.03);
  q = quantiles({4, 1, 3, 2});
  CHECK(q.median == doctest::Approx(2.5));
  CHECK(q.q1 == doctest::Approx(1.75));
  CHECK(q.q3 == doctest::Approx(3.25));
  q = quantiles({1.0, std::nan(""), 3.0});
  CHECK(q.median == 2.0);
  CHECK_THROWS_AS(quantiles({std::nan("")}), DomainError);
}

TEST_CASE("seed sweep") {
  const auto ds = device::generate_dataset(50);
  const TrainConfig c = quick(nn::Family::Mlp, device::Field::SourceCharge, 20);
  const SweepSummary one = seed_sweep(c, ds, 1);
  CHECK(one.train.min == one.train.median);
  const SweepSummary serial = seed_sweep(c, ds, 3, 1);
  const SweepSummary threaded = seed_sweep(c, ds, 3, 3);
  REQUIRE(serial.runs.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(serial.runs[i].seed == i);
    CHECK(serial.runs[i].train_mape == threaded.runs[i].train_mape);
  }
  CHECK(serial.runs[0].train_mape == one.runs[0].train_mape);
  CHECK(serial.runs[0].train_mape != serial.runs[1].train_mape);
  CHECK(sweep_text(serial) == sweep_text(threaded));
  CHECK_THROWS_AS(seed_sweep(c, ds, 0), DomainError);
}
