#pragma once

#include <span>

#include "kanc/device/dataset.hpp"
#include "kanc/nn/network.hpp"

namespace kanc::eval {

// Charges below this magnitude (1e-18 F units) are left out of charge MAPE.
inline constexpr double kChargeFloor = 0.01;

// sum |y - yhat| / sum |y|. Throws MetricError when sum |y| is zero.
double mape(std::span<const double> pred, std::span<const double> truth);
// mape over points with |truth| >= kChargeFloor.
double mape_charge(std::span<const double> pred, std::span<const double> truth);
// Dispatches on the field.
double field_mape(device::Field field, std::span<const double> pred, std::span<const double> truth);

// Model predictions in dataset units at the given points.
Eigen::RowVectorXd predict_field(const nn::Network& net, std::span<const device::DevicePoint> points);

struct SplitMape {
  double train = 0.0;
  double test = 0.0;  // NaN when the test split is empty
};
SplitMape split_mape(const nn::Network& net, const device::VoltageGridDataset& ds, device::Field field);

}  // namespace kanc::eval
