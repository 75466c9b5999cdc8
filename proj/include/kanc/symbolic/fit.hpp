#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kanc/nn/network.hpp"
#include "kanc/symbolic/functions.hpp"

namespace kanc::symbolic {

// KAN edge address: layer, then input i -> output j.
struct EdgeId {
  int layer = 0;
  int out = 0;
  int in = 0;

  bool operator==(const EdgeId&) const = default;
};

// Walk order: layer by layer, edges[j * in + i] within a layer.
std::vector<EdgeId> edge_ids(const nn::Network& net);
int edge_index(const nn::Network& net, EdgeId id);

// c * f(a * x + b) + d
struct EdgeFit {
  EdgeId edge;
  std::string function;
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
  double r2 = 0.0;
  bool fixed = false;
};

inline constexpr int kMinFitSamples = 8;
inline constexpr double kAffineRange = 10.0;

// Grid search over (a, b) in [-10, 10]^2, zooming twice around the best cell
// (steps 1, 0.1, 0.01; 21 x 21 points each), with (c, d) by least squares.
// Points where f is not finite on some sample are skipped. Constant y gives
// c = 0, d = mean, R^2 = 1.
// Throws DomainError for fewer than 8 samples or a degenerate x range.
EdgeFit fit_basic(std::span<const double> x, std::span<const double> y, const BasicFunction& f);

// Every library function, best R^2 first, library order among ties.
std::vector<EdgeFit> suggest(std::span<const double> x, std::span<const double> y,
                             std::span<const BasicFunction> functions = library());

struct EdgeSamples {
  EdgeId edge;
  std::vector<double> x;  // edge input (scaled for the first layer)
  std::vector<double> y;  // edge output
};

// Edge inputs and outputs over the input columns, evenly thinned to at most
// max_samples per edge (0 keeps all).
std::vector<EdgeSamples> edge_samples(const nn::Network& net, const Eigen::MatrixXd& inputs,
                                      int max_samples = 0);

// Replaces the edge by its fitted basic function. Throws ConfigError for an
// unknown edge or function, DomainError if the edge is already symbolic.
void fix_edge(nn::Network& net, const EdgeFit& fit);

bool all_fixed(const nn::Network& net);

// Input variable index from "V_D"/"V_G" (or "0"/"1"). Throws ConfigError.
int parse_variable(const std::string& name);

// Every first-layer edge fed by `variable` becomes the constant it takes at
// raw input 0. Throws ConfigError for a variable the network lacks.
void ablate_variable(nn::Network& net, int variable);

}  // namespace kanc::symbolic
