#include "kanc/eval/metrics.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "kanc/error.hpp"

namespace kanc::eval {

namespace {

double ratio(std::span<const double> pred, std::span<const double> truth, double floor) {
  if (pred.size() != truth.size()) {
    throw ShapeError(fmt::format("mape needs equal lengths, got {} and {}", pred.size(), truth.size()));
  }
  if (pred.empty()) throw ShapeError("mape of an empty array");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (std::abs(truth[i]) < floor) continue;
    num += std::abs(truth[i] - pred[i]);
    den += std::abs(truth[i]);
  }
  if (den == 0.0) throw MetricError("mape is undefined: no nonzero truth values");
  return num / den;
}

}  // namespace

double mape(std::span<const double> pred, std::span<const double> truth) {
  return ratio(pred, truth, 0.0);
}

double mape_charge(std::span<const double> pred, std::span<const double> truth) {
  return ratio(pred, truth, kChargeFloor);
}

double field_mape(device::Field field, std::span<const double> pred, std::span<const double> truth) {
  return device::is_charge(field) ? mape_charge(pred, truth) : mape(pred, truth);
}

Eigen::RowVectorXd predict_field(const nn::Network& net, std::span<const device::DevicePoint> points) {
  return nn::to_target_units(net.spec.conversion, nn::predict(net, device::voltages(points)));
}

SplitMape split_mape(const nn::Network& net, const device::VoltageGridDataset& ds, device::Field field) {
  auto one = [&](const std::vector<device::DevicePoint>& pts) {
    if (pts.empty()) return std::numeric_limits<double>::quiet_NaN();
    const Eigen::RowVectorXd pred = predict_field(net, pts);
    const Eigen::RowVectorXd truth = device::field_row(pts, field);
    return field_mape(field, {pred.data(), static_cast<std::size_t>(pred.size())},
                      {truth.data(), static_cast<std::size_t>(truth.size())});
  };
  return {one(ds.train), one(ds.test)};
}

}  // namespace kanc::eval
