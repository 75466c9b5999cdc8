#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kanc/device/dataset.hpp"
#include "kanc/nn/checkpoint.hpp"
#include "kanc/train/trainer.hpp"

namespace kanc::eval {

inline constexpr double kSweepDrainLow = 0.4;   // V
inline constexpr double kSweepDrainHigh = 0.8;  // V

struct DerivativeCurves {
  double vd = 0.0;
  std::vector<double> vg;
  std::vector<double> current;  // A
  std::vector<double> gm;       // dI/dV_G
  std::vector<double> gm2;      // d2I/dV_G2
};

// Drain current in A as a function of (V_D, V_G).
using CurrentFn = std::function<double(double, double)>;

// V_G from 0 to 0.82 V every `resolution_mv`; derivatives by central
// differences with second-order one-sided ends. Throws DomainError for V_D
// outside [0, 0.82] or a resolution that does not divide 820 mV.
DerivativeCurves derivative_sweep(const CurrentFn& current, double vd, int resolution_mv = 1);
// Checkpoint must model I_D (ConfigError otherwise).
DerivativeCurves derivative_sweep(const nn::Network& net, double vd, int resolution_mv = 1);

// Total variation beyond what one rise and one fall over the curve's range
// can produce: max(0, TV - 2 (max - min)). Zero for monotone and single-peak
// curves. Throws DomainError for fewer than 3 samples.
double waviness(std::span<const double> curve);

// V_G,g_m,g_m2 rows.
std::string curve_text(const DerivativeCurves& c);

struct ReportRow {
  std::string target;
  int step_mv = 0;
  std::uint64_t seed = 0;
  double train_mape = 0.0;
  double test_mape = 0.0;
  double waviness_low = 0.0;   // g'_m at V_D = 0.4 V; NaN for charge targets
  double waviness_high = 0.0;  // g'_m at V_D = 0.8 V
};

struct SeedStats {
  std::string target;
  int runs = 0;
  train::Quantiles train;
  train::Quantiles test;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::vector<DerivativeCurves> curves;  // two per I_D checkpoint
  std::vector<std::string> curve_names;
  std::vector<SeedStats> seed_stats;  // per target with more than one checkpoint
};

ReportRow evaluate_checkpoint(const nn::Checkpoint& ckpt, const device::VoltageGridDataset& ds,
                              std::vector<DerivativeCurves>* curves = nullptr);

EvalReport make_report(std::span<const nn::Checkpoint> checkpoints, const device::VoltageGridDataset& ds);

// target,step,seed,train_mape,test_mape,waviness_0.4V,waviness_0.8V
std::string summary_text(const EvalReport& report);
std::string seed_stats_text(const EvalReport& report);

// summary.csv, seed_stats.csv (if any) and one curve file per sweep. Returns
// the paths written.
std::vector<std::filesystem::path> write_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace kanc::eval
