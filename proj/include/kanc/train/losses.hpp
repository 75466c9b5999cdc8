#pragma once

#include <memory>
#include <span>

#include <Eigen/Dense>

#include "kanc/ad/tape.hpp"
#include "kanc/device/dataset.hpp"

namespace kanc::train {

inline constexpr double kDefaultLossWeight = 100.0;

// Mean squared error. Throws ShapeError on length mismatch or empty input.
double mse(std::span<const double> pred, std::span<const double> truth);

// Target field tabulated on the rectangular train sub-grid, with the
// finite-difference operators and data-side derivative fields the losses use.
struct GridTargets {
  device::Field field = device::Field::DrainCurrent;
  int rows = 0;
  int cols = 0;
  double spacing = 0.0;
  Eigen::MatrixXd inputs;     // 2 x N raw voltages, drain-major
  Eigen::RowVectorXd values;  // dataset units (A, or 1e-18 F)
  std::shared_ptr<const device::SparseOperator> d_drain;
  std::shared_ptr<const device::SparseOperator> d_gate;
  std::shared_ptr<const device::SparseOperator> d2_drain;
  std::shared_ptr<const device::SparseOperator> d2_gate;
};

GridTargets grid_targets(const device::VoltageGridDataset& ds, device::Field field);

// Appends L_I = a Er(I) + Er(log I) + Er(g_m) + Er(g_ds) + Er(g_m') + Er(g_ds')
// for model output y_I (I = exp(y_I)). The log term skips points whose
// tabulated current is zero, where log I is undefined.
ad::NodeId current_loss(ad::Tape& tape, ad::NodeId y, const GridTargets& t, double a);

// Appends L_Q = Er(Q) + Er(dQ/dV_G) + Er(dQ/dV_D) for model output y_Q.
ad::NodeId charge_loss(ad::Tape& tape, ad::NodeId y, const GridTargets& t);

// Dispatches on the target field.
ad::NodeId device_loss(ad::Tape& tape, ad::NodeId y, const GridTargets& t,
                       double a = kDefaultLossWeight);

// Plain evaluations of the same graphs.
double loss_current(const Eigen::RowVectorXd& y, const GridTargets& t,
                    double a = kDefaultLossWeight);
double loss_charge(const Eigen::RowVectorXd& y, const GridTargets& t);

// (1/p) sum (pred - truth)^2 as a graph; `truth` is a constant row.
ad::NodeId mse_node(ad::Tape& tape, ad::NodeId pred, const Eigen::RowVectorXd& truth);

}  // namespace kanc::train
