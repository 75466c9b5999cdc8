#include "kanc/train/losses.hpp"

#include <cmath>

#include <fmt/format.h>

#include "kanc/error.hpp"

namespace kanc::train {

double mse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw ShapeError(fmt::format("mse needs equal lengths, got {} and {}", pred.size(), truth.size()));
  }
  if (pred.empty()) throw ShapeError("mse of an empty array");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

GridTargets grid_targets(const device::VoltageGridDataset& ds, device::Field field) {
  if (static_cast<std::size_t>(ds.rows()) * static_cast<std::size_t>(ds.cols()) != ds.train.size()) {
    throw ShapeError("train points do not form a rectangular grid");
  }
  GridTargets t;
  t.field = field;
  t.rows = ds.rows();
  t.cols = ds.cols();
  t.spacing = ds.spacing();
  t.inputs = device::voltages(ds.train);
  t.values = device::field_row(ds.train, field);
  using device::Axis;
  auto op = [&](Axis axis, int order) {
    return std::make_shared<const device::SparseOperator>(
        device::derivative_operator(t.rows, t.cols, t.spacing, axis, order));
  };
  t.d_drain = op(Axis::Drain, 1);
  t.d_gate = op(Axis::Gate, 1);
  t.d2_drain = op(Axis::Drain, 2);
  t.d2_gate = op(Axis::Gate, 2);
  return t;
}

ad::NodeId mse_node(ad::Tape& tape, ad::NodeId pred, const Eigen::RowVectorXd& truth) {
  const ad::NodeId diff = tape.sub(pred, tape.constant(truth));
  const double p = static_cast<double>(truth.size());
  return tape.scale(tape.sum(tape.pow(diff, 2.0)), 1.0 / p);
}

namespace {

Eigen::RowVectorXd apply(const device::SparseOperator& op, const Eigen::RowVectorXd& v) {
  return (op * v.transpose()).transpose();
}

ad::NodeId derivative_term(ad::Tape& tape, ad::NodeId field,
                           const std::shared_ptr<const device::SparseOperator>& op,
                           const Eigen::RowVectorXd& data) {
  return mse_node(tape, tape.linear(field, op), apply(*op, data));
}

}  // namespace

ad::NodeId current_loss(ad::Tape& tape, ad::NodeId y, const GridTargets& t, double a) {
  if (!(a > 0.0)) throw ConfigError(fmt::format("loss weight a must be positive, got {}", a));
  const ad::NodeId current = tape.exp(y);
  ad::NodeId loss = tape.scale(mse_node(tape, current, t.values), a);

  // log term over points with positive tabulated current
  Eigen::RowVectorXd mask(t.values.size());
  Eigen::RowVectorXd log_data(t.values.size());
  double count = 0.0;
  for (Eigen::Index i = 0; i < t.values.size(); ++i) {
    const bool ok = t.values(i) > 0.0;
    mask(i) = ok ? 1.0 : 0.0;
    log_data(i) = ok ? std::log(t.values(i)) : 0.0;
    count += mask(i);
  }
  if (count == 0.0) throw DomainError("current target has no positive samples");
  const ad::NodeId diff = tape.mul(tape.sub(y, tape.constant(log_data)), tape.constant(mask));
  loss = tape.add(loss, tape.scale(tape.sum(tape.pow(diff, 2.0)), 1.0 / count));

  loss = tape.add(loss, derivative_term(tape, current, t.d_gate, t.values));
  loss = tape.add(loss, derivative_term(tape, current, t.d_drain, t.values));
  loss = tape.add(loss, derivative_term(tape, current, t.d2_gate, t.values));
  loss = tape.add(loss, derivative_term(tape, current, t.d2_drain, t.values));
  return loss;
}

ad::NodeId charge_loss(ad::Tape& tape, ad::NodeId y, const GridTargets& t) {
  ad::NodeId loss = mse_node(tape, y, t.values);
  loss = tape.add(loss, derivative_term(tape, y, t.d_gate, t.values));
  loss = tape.add(loss, derivative_term(tape, y, t.d_drain, t.values));
  return loss;
}

ad::NodeId device_loss(ad::Tape& tape, ad::NodeId y, const GridTargets& t, double a) {
  return device::is_charge(t.field) ? charge_loss(tape, y, t) : current_loss(tape, y, t, a);
}

double loss_current(const Eigen::RowVectorXd& y, const GridTargets& t, double a) {
  if (y.size() != t.values.size()) throw ShapeError("model outputs do not cover the train grid");
  ad::Tape tape;
  const ad::NodeId in = tape.constant(y);
  return tape.scalar(current_loss(tape, in, t, a));
}

double loss_charge(const Eigen::RowVectorXd& y, const GridTargets& t) {
  if (y.size() != t.values.size()) throw ShapeError("model outputs do not cover the train grid");
  ad::Tape tape;
  const ad::NodeId in = tape.constant(y);
  return tape.scalar(charge_loss(tape, in, t));
}

}  // namespace kanc::train
