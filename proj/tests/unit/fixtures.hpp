#pragma once

#include "kanc/device/surrogate.hpp"
#include "kanc/nn/checkpoint.hpp"
#include "kanc/symbolic/functions.hpp"

namespace kanc::testing {

// Symbolic KAN [2,1,1] that computes the surrogate Q_S in closed form:
// -C0 * n v_t * log(1 + exp((V_G - V_th) / (n v_t))).
inline nn::Checkpoint source_charge_oracle() {
  namespace s = device::surrogate;
  const double nvt = s::kSlope * s::kThermalVoltage;
  nn::Network net = nn::Network::initialize(nn::kan_spec({2, 1, 1}, 2, nn::Conversion::ChargeScale), 0);
  auto fix = [](nn::KanEdge& e, const char* f, double a, double b, double c, double d) {
    e.symbolic = nn::SymbolicEdge{&symbolic::find_function(f), Eigen::Vector4d(a, b, c, d)};
  };
  fix(net.kan[0].edge(0, 0), "x", 0.0, 0.0, 0.0, 0.0);
  fix(net.kan[0].edge(0, 1), "exp", s::kMaxVoltage / nvt, -s::kThreshold / nvt, 1.0, 1.0);
  fix(net.kan[1].edge(0, 0), "log", 1.0, 0.0, -s::kChargeScale * nvt, 0.0);
  for (auto& layer : net.kan) layer.bias.setZero();
  nn::Checkpoint ckpt{net, {}};
  ckpt.meta.target = "Q_S";
  return ckpt;
}

}  // namespace kanc::testing
