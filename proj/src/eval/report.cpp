#include "kanc/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "kanc/device/surrogate.hpp"
#include "kanc/error.hpp"
#include "kanc/eval/metrics.hpp"

namespace kanc::eval {

namespace {

constexpr int kAxisMv = 820;

std::vector<double> gate_axis(int resolution_mv) {
  if (resolution_mv < 1 || kAxisMv % resolution_mv != 0) {
    throw DomainError(fmt::format("sweep resolution must divide {} mV, got {}", kAxisMv, resolution_mv));
  }
  std::vector<double> vg;
  for (int mv = 0; mv <= kAxisMv; mv += resolution_mv) vg.push_back(mv / 1000.0);
  return vg;
}

void check_drain(double vd) {
  if (!(vd >= 0.0 && vd <= device::surrogate::kMaxVoltage)) {
    throw DomainError(fmt::format("sweep drain voltage must lie in [0, 0.82] V, got {}", vd));
  }
}

DerivativeCurves finish(double vd, std::vector<double> vg, std::vector<double> current, int resolution_mv) {
  const double h = resolution_mv / 1000.0;
  DerivativeCurves c;
  c.vd = vd;
  c.gm = device::derivative_1d(current, h);
  c.gm2 = device::derivative_1d(c.gm, h);
  c.vg = std::move(vg);
  c.current = std::move(current);
  return c;
}

std::string number(double v) { return std::isnan(v) ? "nan" : fmt::format("{:.17g}", v); }

}  // namespace

DerivativeCurves derivative_sweep(const CurrentFn& current, double vd, int resolution_mv) {
  check_drain(vd);
  std::vector<double> vg = gate_axis(resolution_mv);
  std::vector<double> id(vg.size());
  for (std::size_t k = 0; k < vg.size(); ++k) id[k] = current(vd, vg[k]);
  return finish(vd, std::move(vg), std::move(id), resolution_mv);
}

DerivativeCurves derivative_sweep(const nn::Network& net, double vd, int resolution_mv) {
  if (net.spec.conversion != nn::Conversion::ExpCurrent) {
    throw ConfigError("derivative sweeps need a drain-current model");
  }
  check_drain(vd);
  std::vector<double> vg = gate_axis(resolution_mv);
  Eigen::MatrixXd x(2, static_cast<Eigen::Index>(vg.size()));
  for (std::size_t k = 0; k < vg.size(); ++k) {
    x(0, static_cast<Eigen::Index>(k)) = vd;
    x(1, static_cast<Eigen::Index>(k)) = vg[k];
  }
  const Eigen::RowVectorXd y = nn::to_target_units(net.spec.conversion, nn::predict(net, x));
  std::vector<double> id(y.data(), y.data() + y.size());
  return finish(vd, std::move(vg), std::move(id), resolution_mv);
}

double waviness(std::span<const double> curve) {
  if (curve.size() < 3) throw DomainError(fmt::format("waviness needs at least 3 samples, got {}", curve.size()));
  double tv = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k) tv += std::abs(curve[k] - curve[k - 1]);
  const auto [lo, hi] = std::minmax_element(curve.begin(), curve.end());
  return std::max(0.0, tv - 2.0 * (*hi - *lo));
}

std::string curve_text(const DerivativeCurves& c) {
  std::string out = fmt::format("# V_D={}\nV_G,g_m,g_m2\n", c.vd);
  for (std::size_t k = 0; k < c.vg.size(); ++k) {
    out += fmt::format("{},{:.17g},{:.17g}\n", c.vg[k], c.gm[k], c.gm2[k]);
  }
  return out;
}

ReportRow evaluate_checkpoint(const nn::Checkpoint& ckpt, const device::VoltageGridDataset& ds,
                              std::vector<DerivativeCurves>* curves) {
  const device::Field field = device::parse_field(ckpt.meta.target);
  ReportRow row;
  row.target = ckpt.meta.target;
  row.step_mv = ds.step_mv;
  row.seed = ckpt.meta.seed;
  const SplitMape m = split_mape(ckpt.network, ds, field);
  row.train_mape = m.train;
  row.test_mape = m.test;
  row.waviness_low = std::nan("");
  row.waviness_high = std::nan("");
  if (field == device::Field::DrainCurrent) {
    const DerivativeCurves low = derivative_sweep(ckpt.network, kSweepDrainLow);
    const DerivativeCurves high = derivative_sweep(ckpt.network, kSweepDrainHigh);
    row.waviness_low = waviness(low.gm2);
    row.waviness_high = waviness(high.gm2);
    if (curves) {
      curves->push_back(low);
      curves->push_back(high);
    }
  }
  return row;
}

EvalReport make_report(std::span<const nn::Checkpoint> checkpoints, const device::VoltageGridDataset& ds) {
  EvalReport report;
  std::map<std::string, std::vector<std::size_t>> by_target;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    std::vector<DerivativeCurves> curves;
    report.rows.push_back(evaluate_checkpoint(checkpoints[i], ds, &curves));
    const ReportRow& row = report.rows.back();
    for (const DerivativeCurves& c : curves) {
      report.curve_names.push_back(fmt::format("curve_{:02d}_{}_seed{}_vd{:.2f}.csv", i, row.target, row.seed, c.vd));
      report.curves.push_back(c);
    }
    by_target[row.target].push_back(i);
  }
  for (const auto& [target, idx] : by_target) {
    if (idx.size() < 2) continue;
    std::vector<double> tr;
    std::vector<double> te;
    for (std::size_t i : idx) {
      tr.push_back(report.rows[i].train_mape);
      te.push_back(report.rows[i].test_mape);
    }
    SeedStats s;
    s.target = target;
    s.runs = static_cast<int>(idx.size());
    s.train = train::quantiles(tr);
    const bool any_test = std::any_of(te.begin(), te.end(), [](double v) { return std::isfinite(v); });
    s.test = any_test ? train::quantiles(te) : train::Quantiles{std::nan(""), std::nan(""), std::nan(""),
                                                                 std::nan(""), std::nan("")};
    report.seed_stats.push_back(s);
  }
  return report;
}

std::string summary_text(const EvalReport& report) {
  std::string out =
      "# waviness: total variation of g_m2 beyond twice its range (project-specific smoothness metric)\n"
      "target,step,seed,train_mape,test_mape,waviness_0.4V,waviness_0.8V\n";
  for (const ReportRow& r : report.rows) {
    out += fmt::format("{},{},{},{},{},{},{}\n", r.target, r.step_mv, r.seed, number(r.train_mape),
                       number(r.test_mape), number(r.waviness_low), number(r.waviness_high));
  }
  return out;
}

std::string seed_stats_text(const EvalReport& report) {
  std::string out = "target,split,runs,min,q1,median,q3,max\n";
  for (const SeedStats& s : report.seed_stats) {
    for (const auto& [split, q] : {std::pair{"train", s.train}, std::pair{"test", s.test}}) {
      out += fmt::format("{},{},{},{},{},{},{},{}\n", s.target, split, s.runs, number(q.min), number(q.q1),
                         number(q.median), number(q.q3), number(q.max));
    }
  }
  return out;
}

std::vector<std::filesystem::path> write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& text) {
    const std::filesystem::path p = dir / name;
    std::ofstream os(p, std::ios::binary);
    if (!os) throw IoError(fmt::format("cannot write {}", p.string()));
    os << text;
    written.push_back(p);
  };
  put("summary.csv", summary_text(report));
  if (!report.seed_stats.empty()) put("seed_stats.csv", seed_stats_text(report));
  for (std::size_t i = 0; i < report.curves.size(); ++i) put(report.curve_names[i], curve_text(report.curves[i]));
  return written;
}

}  // namespace kanc::eval
