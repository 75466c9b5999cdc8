#include "kanc/device/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "kanc/error.hpp"

namespace kanc::device {

std::string_view field_name(Field f) {
  switch (f) {
    case Field::DrainCurrent: return "I_D";
    case Field::DrainCharge: return "Q_D";
    case Field::SourceCharge: return "Q_S";
    case Field::GateCharge: return "Q_G";
  }
  return "?";
}

Field parse_field(std::string_view name) {
  for (Field f : {Field::DrainCurrent, Field::DrainCharge, Field::SourceCharge, Field::GateCharge}) {
    if (name == field_name(f)) return f;
  }
  throw ConfigError(fmt::format("unknown target '{}' (expected I_D, Q_D, Q_S or Q_G)", name));
}

double field_value(const DevicePoint& p, Field f) {
  switch (f) {
    case Field::DrainCurrent: return p.id;
    case Field::DrainCharge: return p.qd;
    case Field::SourceCharge: return p.qs;
    case Field::GateCharge: return p.qg;
  }
  return 0.0;
}

bool is_charge(Field f) { return f != Field::DrainCurrent; }

bool is_supported_step(int step_mv) {
  return step_mv == 5 || step_mv == 10 || step_mv == 20 || step_mv == 50;
}

VoltageGridDataset generate_dataset(int step_mv) {
  if (!is_supported_step(step_mv)) {
    throw DomainError(fmt::format("unsupported voltage step {} mV (use 5, 10, 20 or 50)", step_mv));
  }
  const int stride = step_mv / kMasterStepMv;
  VoltageGridDataset ds;
  ds.step_mv = step_mv;
  auto volts = [](int i) { return (i * kMasterStepMv) / 1000.0; };
  for (int i = 0; i < kMasterPoints; i += stride) {
    ds.drain_axis.push_back(volts(i));
    ds.gate_axis.push_back(volts(i));
  }
  for (int id = 0; id < kMasterPoints; ++id) {
    for (int ig = 0; ig < kMasterPoints; ++ig) {
      DevicePoint p = surrogate_eval(volts(id), volts(ig));
      if (id % stride == 0 && ig % stride == 0) {
        ds.train.push_back(p);
      } else {
        ds.test.push_back(p);
      }
    }
  }
  return ds;
}

Eigen::MatrixXd voltages(std::span<const DevicePoint> points) {
  Eigen::MatrixXd v(2, static_cast<Eigen::Index>(points.size()));
  for (std::size_t j = 0; j < points.size(); ++j) {
    v(0, static_cast<Eigen::Index>(j)) = points[j].vd;
    v(1, static_cast<Eigen::Index>(j)) = points[j].vg;
  }
  return v;
}

Eigen::RowVectorXd field_row(std::span<const DevicePoint> points, Field f) {
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(points.size()));
  for (std::size_t j = 0; j < points.size(); ++j) {
    r(static_cast<Eigen::Index>(j)) = field_value(points[j], f);
  }
  return r;
}

namespace {

// Stencil weights (relative offsets) of the first derivative at position i of n.
void stencil(int i, int n, double h, std::vector<std::pair<int, double>>& out) {
  out.clear();
  if (i == 0) {
    out = {{0, -3.0 / (2 * h)}, {1, 4.0 / (2 * h)}, {2, -1.0 / (2 * h)}};
  } else if (i == n - 1) {
    out = {{0, 3.0 / (2 * h)}, {-1, -4.0 / (2 * h)}, {-2, 1.0 / (2 * h)}};
  } else {
    out = {{-1, -1.0 / (2 * h)}, {1, 1.0 / (2 * h)}};
  }
}

}  // namespace

SparseOperator derivative_operator(int rows, int cols, double h, Axis axis, int order) {
  const int n_axis = axis == Axis::Drain ? rows : cols;
  if (n_axis < 3) {
    throw DomainError(fmt::format("finite differences need >= 3 points along the axis, got {}",
                                  n_axis));
  }
  if (order != 1 && order != 2) throw DomainError("derivative order must be 1 or 2");
  const int n = rows * cols;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) * 3);
  std::vector<std::pair<int, double>> w;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int idx = r * cols + c;
      const int pos = axis == Axis::Drain ? r : c;
      const int stride = axis == Axis::Drain ? cols : 1;
      stencil(pos, n_axis, h, w);
      for (auto [off, weight] : w) trip.emplace_back(idx, idx + off * stride, weight);
    }
  }
  SparseOperator d(n, n);
  d.setFromTriplets(trip.begin(), trip.end());
  if (order == 2) {
    SparseOperator d2 = d * d;
    return d2;
  }
  return d;
}

std::vector<double> derivative_1d(std::span<const double> values, double h) {
  const int n = static_cast<int>(values.size());
  if (n < 3) throw DomainError("finite differences need >= 3 samples");
  const auto f = [&](int i) { return values[static_cast<std::size_t>(i)]; };
  std::vector<double> out(values.size());
  // same weights as the operator stencils, written as differences so flat data gives exactly 0
  out.front() = (3.0 * (f(1) - f(0)) + (f(1) - f(2))) / (2 * h);
  out.back() = (3.0 * (f(n - 1) - f(n - 2)) + (f(n - 3) - f(n - 2))) / (2 * h);
  for (int i = 1; i + 1 < n; ++i) out[static_cast<std::size_t>(i)] = (f(i + 1) - f(i - 1)) / (2 * h);
  return out;
}

Eigen::MatrixXd grid_derivative(const VoltageGridDataset& ds, Field f, Axis axis, int order) {
  const SparseOperator op = derivative_operator(ds.rows(), ds.cols(), ds.spacing(), axis, order);
  const Eigen::VectorXd values = field_row(ds.train, f).transpose();
  const Eigen::VectorXd d = op * values;
  Eigen::MatrixXd grid(ds.rows(), ds.cols());
  for (int r = 0; r < ds.rows(); ++r) {
    for (int c = 0; c < ds.cols(); ++c) grid(r, c) = d(r * ds.cols() + c);
  }
  return grid;
}

std::string dataset_text(const VoltageGridDataset& ds) {
  std::string out = "V_D,V_G,I_D,Q_D,Q_S,Q_G,split\n";
  auto emit = [&out](const DevicePoint& p, std::string_view split) {
    out += fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", p.vd, p.vg, p.id,
                       p.qd, p.qs, p.qg, split);
  };
  for (const auto& p : ds.train) emit(p, "train");
  for (const auto& p : ds.test) emit(p, "test");
  return out;
}

void write_dataset(const VoltageGridDataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(fmt::format("cannot write dataset to {}", path.string()));
  os << dataset_text(ds);
  if (!os) throw IoError(fmt::format("failed writing {}", path.string()));
}

VoltageGridDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError(fmt::format("cannot open dataset {}", path.string()));
  std::string line;
  if (!std::getline(is, line) || line.rfind("V_D,V_G", 0) != 0) {
    throw IoError(fmt::format("{}: missing dataset header", path.string()));
  }
  VoltageGridDataset ds;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::array<double, 6> v{};
    for (double& x : v) {
      if (!std::getline(row, cell, ',')) {
        throw IoError(fmt::format("{}:{}: too few columns", path.string(), line_no));
      }
      x = std::stod(cell);
    }
    std::getline(row, cell);
    DevicePoint p{v[0], v[1], v[2], v[3], v[4], v[5]};
    if (cell == "train") {
      ds.train.push_back(p);
    } else if (cell == "test") {
      ds.test.push_back(p);
    } else {
      throw IoError(fmt::format("{}:{}: bad split '{}'", path.string(), line_no, cell));
    }
  }
  std::vector<double> d, g;
  for (const auto& p : ds.train) {
    d.push_back(p.vd);
    g.push_back(p.vg);
  }
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end()), d.end());
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  if (d.size() < 2 || d.size() * g.size() != ds.train.size()) {
    throw IoError(fmt::format("{}: train points do not form a rectangular grid", path.string()));
  }
  ds.drain_axis = std::move(d);
  ds.gate_axis = std::move(g);
  ds.step_mv = static_cast<int>(std::lround((ds.drain_axis[1] - ds.drain_axis[0]) * 1e3));
  return ds;
}

}  // namespace kanc::device
