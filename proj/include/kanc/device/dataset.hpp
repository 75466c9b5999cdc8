#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "kanc/device/surrogate.hpp"

namespace kanc::device {

enum class Field { DrainCurrent, DrainCharge, SourceCharge, GateCharge };
enum class Axis { Drain, Gate };

std::string_view field_name(Field f);  // "I_D", "Q_D", ...
Field parse_field(std::string_view name);
double field_value(const DevicePoint& p, Field f);
bool is_charge(Field f);

inline constexpr int kMasterStepMv = 5;
inline constexpr int kMasterPoints = 165;  // 0 .. 0.82 V in 5 mV steps

// Surrogate responses on the 5 mV master grid, split into a rectangular train
// sub-grid (every step_mv starting at 0 V) and the remaining test points.
// Train points are ordered drain-major: index = i_d * gate_axis.size() + i_g.
struct VoltageGridDataset {
  int step_mv = kMasterStepMv;
  std::vector<double> drain_axis;  // train sub-grid axes
  std::vector<double> gate_axis;
  std::vector<DevicePoint> train;
  std::vector<DevicePoint> test;

  double spacing() const { return step_mv / 1000.0; }
  int rows() const { return static_cast<int>(drain_axis.size()); }
  int cols() const { return static_cast<int>(gate_axis.size()); }
};

bool is_supported_step(int step_mv);

// Throws DomainError for steps other than 5, 10, 20, 50 mV.
VoltageGridDataset generate_dataset(int step_mv);

// 2 x N matrix of (V_D, V_G) columns.
Eigen::MatrixXd voltages(std::span<const DevicePoint> points);
Eigen::RowVectorXd field_row(std::span<const DevicePoint> points, Field f);

using SparseOperator = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Finite-difference operator on a drain-major rows x cols grid with spacing h:
// central differences inside, one-sided second-order stencils at the edges.
// order 2 applies the first-order operator twice. Throws DomainError when the
// axis has fewer than 3 points.
SparseOperator derivative_operator(int rows, int cols, double h, Axis axis, int order);

// Same stencils along a single uniformly sampled curve.
std::vector<double> derivative_1d(std::span<const double> values, double h);

// Derivative of a tabulated field over the train sub-grid, as a rows x cols grid.
Eigen::MatrixXd grid_derivative(const VoltageGridDataset& ds, Field f, Axis axis, int order);

// Delimited text: header, then V_D,V_G,I_D,Q_D,Q_S,Q_G,split per point.
void write_dataset(const VoltageGridDataset& ds, const std::filesystem::path& path);
std::string dataset_text(const VoltageGridDataset& ds);
VoltageGridDataset read_dataset(const std::filesystem::path& path);

}  // namespace kanc::device
