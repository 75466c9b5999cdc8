#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kanc/device/dataset.hpp"
#include "kanc/nn/checkpoint.hpp"
#include "kanc/symbolic/expr.hpp"
#include "kanc/symbolic/fit.hpp"
#include "kanc/train/trainer.hpp"

namespace kanc::symbolic {

inline constexpr double kRetrainFraction = 0.2;
inline constexpr int kDefaultFitSamples = 1000;

struct SrConfig {
  int k = 3;                   // edges fixed per round; 0 or >= edge count fixes all at once
  int base_budget = train::kKanEpochs;
  double retrain_fraction = kRetrainFraction;
  int retrain_epochs = -1;     // -1: retrain_fraction * base_budget
  double lr = 0.0;             // 0: the KAN default for the target
  double a = train::kDefaultLossWeight;
  int max_samples = kDefaultFitSamples;

  int epochs_per_round() const;
};

struct SrRound {
  int round = 0;
  std::vector<EdgeFit> fixed;  // edges fixed this round
  int epochs = 0;
  double loss = 0.0;           // after retraining
  double train_mape = 0.0;
  double test_mape = 0.0;
};

struct SrResult {
  nn::Checkpoint checkpoint;
  std::vector<EdgeFit> fits;   // every fixed edge, in fixing order
  std::vector<SrRound> rounds;
  bool diverged = false;
  std::optional<Formula> formula;  // set once every edge is fixed
};

// Per-edge best fits over the training inputs, unfixed edges only.
std::vector<EdgeFit> best_fits(const nn::Network& net, const Eigen::MatrixXd& inputs, int max_samples);

// Fix the k least accurate edges, retrain everything still trainable with
// LBFGS at the current grid, repeat until no spline edge is left. A retrain
// that blows up stops the loop with diverged set.
SrResult iterative_sr(const nn::Checkpoint& ckpt, const device::VoltageGridDataset& ds, const SrConfig& config);

// Every edge fixed in one pass, no retraining.
SrResult posthoc_sr(const nn::Checkpoint& ckpt, const device::VoltageGridDataset& ds,
                    int max_samples = kDefaultFitSamples);

// "# k=v" settings, then round,edge,function,a,b,c,d,r2,epochs,loss,train_mape,test_mape rows.
std::string sr_log_text(const SrResult& r, const SrConfig& config);

}  // namespace kanc::symbolic
