#include "kanc/device/surrogate.hpp"

#include <cmath>

#include <fmt/format.h>

#include "kanc/error.hpp"

namespace kanc::device {

using namespace surrogate;

namespace {

constexpr double kNvt = kSlope * kThermalVoltage;

double softplus(double z) {
  // log1p(exp(z)) without overflow for large z.
  return z > 30.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_range(double vd, double vg) {
  if (!(vd >= 0.0 && vd <= kMaxVoltage && vg >= 0.0 && vg <= kMaxVoltage)) {
    throw DomainError(
        fmt::format("surrogate defined on [0, {}] V, got V_D={} V_G={}", kMaxVoltage, vd, vg));
  }
}

}  // namespace

double overdrive(double vg) { return kNvt * softplus((vg - kThreshold) / kNvt); }

DevicePoint surrogate_eval(double vd, double vg) {
  check_range(vd, vg);
  const double f = overdrive(vg);
  DevicePoint p;
  p.vd = vd;
  p.vg = vg;
  p.id = kTransconductance * f * f * std::tanh(vd / (0.08 + 0.6 * f));
  p.qs = -kChargeScale * f;
  p.qd = -kChargeScale * f * (0.35 + 0.25 * std::tanh((vd - 0.3) / 0.2));
  p.qg = -(p.qs + p.qd) * 1.5;
  return p;
}

double surrogate_gm(double vd, double vg) {
  check_range(vd, vg);
  const double f = overdrive(vg);
  const double df = logistic((vg - kThreshold) / kNvt);
  const double den = 0.08 + 0.6 * f;
  const double t = std::tanh(vd / den);
  const double dt = (1.0 - t * t) * (-vd / (den * den)) * 0.6 * df;
  return kTransconductance * (2.0 * f * df * t + f * f * dt);
}

double surrogate_gds(double vd, double vg) {
  check_range(vd, vg);
  const double f = overdrive(vg);
  const double den = 0.08 + 0.6 * f;
  const double t = std::tanh(vd / den);
  return kTransconductance * f * f * (1.0 - t * t) / den;
}

double bulk_charge(const DevicePoint& p) { return -(p.qd + p.qs + p.qg); }

double convert_current(double y) { return std::exp(y); }

double convert_charge(double y) { return y * 1e-18; }

}  // namespace kanc::device
