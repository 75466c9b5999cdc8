#pragma once

namespace kanc::device {

// Analytical FinFET-like reference device. Closed forms are frozen: tests
// and datasets depend on them bit for bit.
namespace surrogate {
inline constexpr double kThermalVoltage = 0.0258;  // V
inline constexpr double kThreshold = 0.25;         // V
inline constexpr double kSlope = 1.2;              // subthreshold factor n
inline constexpr double kTransconductance = 5e-3;  // A/V^2
inline constexpr double kChargeScale = 60.0;       // 1e-18 F per V
inline constexpr double kMaxVoltage = 0.82;        // V
}  // namespace surrogate

// Charges are in units of 1e-18 F.
struct DevicePoint {
  double vd = 0.0;
  double vg = 0.0;
  double id = 0.0;
  double qd = 0.0;
  double qs = 0.0;
  double qg = 0.0;
};

// Smooth overdrive F(V_G) = n v_t ln(1 + exp((V_G - V_th) / (n v_t))).
double overdrive(double vg);

// Throws DomainError outside 0 <= V_D, V_G <= 0.82.
DevicePoint surrogate_eval(double vd, double vg);

// Closed-form partial derivatives of the surrogate drain current.
double surrogate_gm(double vd, double vg);
double surrogate_gds(double vd, double vg);

// Q_B = -(Q_D + Q_S + Q_G), scaled units.
double bulk_charge(const DevicePoint& p);

// I_D = exp(y_I).
double convert_current(double y);
// Q = y_Q * 1e-18 F.
double convert_charge(double y);

}  // namespace kanc::device
