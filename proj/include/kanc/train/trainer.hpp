#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kanc/ad/tape.hpp"
#include "kanc/device/dataset.hpp"
#include "kanc/nn/checkpoint.hpp"
#include "kanc/nn/network.hpp"
#include "kanc/train/losses.hpp"
#include "kanc/train/optim.hpp"

namespace kanc::train {

// Desk-scale epoch budgets and the full reference budgets.
inline constexpr int kMlpDeskEpochs = 5000;
inline constexpr int kKanEpochs = 1500;
inline constexpr int kFkanDeskEpochs = 10000;
inline constexpr int kMlpFullEpochs = 100000;  // MLP runs end on the lr floor first
inline constexpr int kFkanFullEpochs = 60000;
inline constexpr int kFkanDecaySteps = 30;     // 60,000 / 2,000

struct TrainConfig {
  nn::Family family = nn::Family::Mlp;
  std::string arch;  // preset name; empty picks MLP1 / KAN1 / FKAN1
  device::Field target = device::Field::DrainCurrent;
  int step_mv = 10;
  std::uint64_t seed = 0;
  double a = kDefaultLossWeight;
  int epochs = -1;            // -1: family default (desk or full)
  bool full_budget = false;
  double lr = 0.0;            // 0: family and target default
  std::vector<int> ladder{2, 4, 8, 12, 16};
  double weight_decay = 1e-5;
  int plateau_window = 500;
  double plateau_threshold = 1e-3;
  double plateau_factor = 0.5;
  double lr_floor = 1e-5;
  double decay_factor = 0.85;
  int decay_every = 0;        // 0: budget / kFkanDecaySteps
  int lbfgs_history = 10;

  std::string arch_name() const;
  int budget() const;
  double initial_lr() const;
  // Throws ConfigError.
  void validate() const;
};

// Key-value INI text; keys may sit at top level or under [train].
TrainConfig parse_config(const std::string& text);
TrainConfig read_config(const std::filesystem::path& path);
std::string config_text(const TrainConfig& config);

struct TrainLog {
  std::vector<int> epoch;
  std::vector<double> loss;
  std::vector<double> lr;
  std::vector<int> stage;
  std::vector<int> stage_grid;          // KAN grid size per stage
  std::vector<std::size_t> stage_start; // index into the per-epoch rows
  std::vector<double> loss_before_refine;  // per stage after the first
  std::vector<double> loss_after_refine;
  std::vector<double> refine_change;    // max |output change| at train points
  std::vector<std::pair<std::string, std::string>> settings;
  double wall_seconds = 0.0;
  bool diverged = false;

  void record(int e, double l, double rate, int s);
};

// Settings as "# key=value" lines, then "epoch,loss,lr,stage" rows.
std::string log_text(const TrainLog& log);
void write_log(const TrainLog& log, const std::filesystem::path& path);

struct TrainResult {
  nn::Checkpoint checkpoint;
  TrainLog log;
};

// Inputs (raw, 2 x N or 1 x N) and a loss graph over the model output.
struct Problem {
  Eigen::MatrixXd inputs;
  std::function<ad::NodeId(ad::Tape&, ad::NodeId)> loss;
};

Problem device_problem(const GridTargets& targets, double a);
// Plain MSE against a row of targets in network output units.
Problem mse_problem(Eigen::MatrixXd inputs, Eigen::RowVectorXd targets);

// Loss and gradient over the flat parameter vector of a fixed network shape.
class NetworkObjective {
 public:
  NetworkObjective(const nn::Network& net, const Problem& problem);
  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd* grad);
  Objective function();
  Eigen::RowVectorXd output(const Eigen::VectorXd& x);

 private:
  std::vector<nn::ParamBlock> blocks_;
  ad::Tape tape_;
  nn::BoundNetwork bound_;
  ad::NodeId loss_;
};

double evaluate_loss(const nn::Network& net, const Problem& problem);

struct AdamSchedule {
  enum class Kind { Plateau, StepDecay };
  Kind kind = Kind::Plateau;
  AdamOptions adam;
  int epochs = 0;
  int plateau_window = 500;
  double plateau_threshold = 1e-3;
  double plateau_factor = 0.5;
  double lr_floor = 1e-5;  // plateau runs stop below this
  double decay_factor = 0.85;
  int decay_every = 1;
};

// lr0 * factor^floor(epoch / every)
double step_decay_lr(double lr0, double factor, int every, int epoch);

// Full-batch Adam. The returned checkpoint meta holds only epochs and loss.
TrainResult train_adam(nn::Network net, const Problem& problem, const AdamSchedule& schedule);

// Full-batch LBFGS, one quasi-Newton iteration per epoch. For KAN networks a
// non-empty ladder refines the splines to each grid before its stage.
TrainResult train_lbfgs(nn::Network net, const Problem& problem, const LbfgsOptions& options,
                        const std::vector<int>& ladder, int epochs_per_stage);

nn::Network initial_network(const TrainConfig& config);

TrainResult train_mlp(const TrainConfig& config, const device::VoltageGridDataset& ds);
TrainResult train_kan(const TrainConfig& config, const device::VoltageGridDataset& ds);
TrainResult train_fkan(const TrainConfig& config, const device::VoltageGridDataset& ds);
TrainResult train(const TrainConfig& config, const device::VoltageGridDataset& ds);

struct Quantiles {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};
// Linear interpolation between order statistics; NaN entries are dropped.
// Throws DomainError when no finite value remains.
Quantiles quantiles(std::vector<double> values);

struct SeedResult {
  std::uint64_t seed = 0;
  double train_mape = 0.0;
  double test_mape = 0.0;
  double final_loss = 0.0;
  bool diverged = false;
};

struct SweepSummary {
  std::vector<SeedResult> runs;
  Quantiles train;
  Quantiles test;  // NaN when no run has a finite test MAPE
};

// Seeds config.seed, config.seed + 1, ... Results come back in seed order
// regardless of `threads`. `results`, when given, receives each run (empty
// where training threw).
SweepSummary seed_sweep(const TrainConfig& config, const device::VoltageGridDataset& ds, int n,
                        int threads = 1, std::vector<std::optional<TrainResult>>* results = nullptr);
std::string sweep_text(const SweepSummary& summary);

}  // namespace kanc::train
