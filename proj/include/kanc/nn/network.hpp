#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "kanc/ad/tape.hpp"
#include "kanc/device/dataset.hpp"
#include "kanc/spline/bspline.hpp"
#include "kanc/symbolic/functions.hpp"

namespace kanc::nn {

enum class Family { Mlp, Kan, Fkan };
enum class Conversion { ExpCurrent, ChargeScale };

std::string_view family_name(Family f);
Family parse_family(std::string_view name);
std::string_view conversion_name(Conversion c);
Conversion parse_conversion(std::string_view name);
Conversion conversion_for(device::Field target);

// Raw voltages are multiplied by input_scale before the first layer; device
// networks use 1/0.82 so inputs land in [0, 1].
inline constexpr double kDeviceInputScale = 1.0 / device::surrogate::kMaxVoltage;

struct NetworkSpec {
  Family family = Family::Mlp;
  std::vector<int> widths;  // n_0 .. n_L
  std::vector<int> grid;    // per layer, KAN and FKAN only
  int spline_order = 3;
  Conversion conversion = Conversion::ChargeScale;
  double input_scale = 1.0;

  int num_layers() const { return static_cast<int>(widths.size()) - 1; }
  // Throws ShapeError when widths/grid are inconsistent.
  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

NetworkSpec mlp_spec(std::vector<int> widths, Conversion c, double input_scale = kDeviceInputScale);
NetworkSpec kan_spec(std::vector<int> widths, int grid, Conversion c,
                     double input_scale = kDeviceInputScale, int order = 3);
NetworkSpec fkan_spec(std::vector<int> widths, std::vector<int> grid, Conversion c,
                      double input_scale = kDeviceInputScale);

// Architectures of the network overview: MLP1, MLP2, KAN1, KAN2, FKAN1, FKAN2.
// KAN shapes drop the trailing 1->1 layer for charge targets.
NetworkSpec preset(std::string_view name, device::Field target);

// MLP: sum(in*out + out); FKAN: sum(2*G*in*out + out);
// KAN: sum(in*out*(G+k+2) + out).
long param_count(const NetworkSpec& spec);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// Edge replaced by c * f(a * x + b) + d. affine = (a, b, c, d).
struct SymbolicEdge {
  const symbolic::BasicFunction* function = nullptr;
  Eigen::Vector4d affine = Eigen::Vector4d(1.0, 0.0, 1.0, 0.0);
};

struct KanEdge {
  spline::SplineActivation activation;
  std::optional<SymbolicEdge> symbolic;

  double operator()(double x) const;
};

struct KanLayer {
  int in = 0;
  int out = 0;
  std::vector<KanEdge> edges;  // edges[j * in + i]: input i -> output j
  Eigen::VectorXd bias;

  KanEdge& edge(int j, int i) { return edges[static_cast<std::size_t>(j * in + i)]; }
  const KanEdge& edge(int j, int i) const { return edges[static_cast<std::size_t>(j * in + i)]; }
};

struct FourierLayer {
  int in = 0;
  int out = 0;
  int grid = 1;
  Eigen::MatrixXd cos_coef;  // out x (in * grid); column i * grid + (k - 1)
  Eigen::MatrixXd sin_coef;
  Eigen::VectorXd bias;
};

// Only the vector matching spec.family is populated.
struct Network {
  NetworkSpec spec;
  std::vector<DenseLayer> dense;
  std::vector<KanLayer> kan;
  std::vector<FourierLayer> fourier;

  static Network initialize(const NetworkSpec& spec, std::uint64_t seed);
  int num_edges() const;
};

// y (before output conversion) for raw inputs, one column per point.
Eigen::RowVectorXd predict(const Network& net, const Eigen::MatrixXd& inputs);
double predict(const Network& net, double vd, double vg);

// Output conversion to dataset units: exp for currents, identity for charges
// (already in 1e-18 F units).
double to_target_units(Conversion c, double y);
Eigen::RowVectorXd to_target_units(Conversion c, const Eigen::RowVectorXd& y);

// Trainable parameter arrays in a fixed order. Symbolic KAN edges expose
// their affine parameters in place of spline coefficients and weights.
struct ParamBlock {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};
std::vector<ParamBlock> parameter_blocks(const Network& net);
std::vector<ad::Matrix> parameter_values(const Network& net);
Eigen::VectorXd flatten(const Network& net);
void assign(Network& net, const Eigen::VectorXd& flat);

struct BoundNetwork {
  ad::NodeId output;
  std::vector<ad::NodeId> params;  // leaves, parameter_blocks order
};

// Appends the network graph for a 2 x N (n_0 x N) input node. Parameters become
// tape leaves when `trainable`, constants otherwise.
BoundNetwork bind(const Network& net, ad::Tape& tape, ad::NodeId inputs, bool trainable = true);

// Per-layer node values and edge outputs of a KAN for every input column.
struct KanTrace {
  std::vector<Eigen::MatrixXd> node_inputs;  // per layer: in x N (scaled)
  std::vector<std::vector<Eigen::RowVectorXd>> edge_outputs;  // [layer][j*in+i]
  Eigen::RowVectorXd output;
};
KanTrace trace(const Network& net, const Eigen::MatrixXd& inputs);

// Grid refinement of every spline edge of a KAN to new_grid cells.
void refine(Network& net, int new_grid);
// Same, fitting each edge over the range its inputs take on `inputs` as well
// as the knot domain.
void refine(Network& net, int new_grid, const Eigen::MatrixXd& inputs);

struct Attribution {
  std::vector<Eigen::MatrixXd> edge;  // per layer, out x in, in [0, 1]
  std::vector<Eigen::VectorXd> node;  // per layer input nodes, plus the output layer
};

// Edge score: standard deviation of the edge output over `inputs`, normalized
// by the largest score in its layer. Node score: max over outgoing edges.
// Throws DomainError for an empty sample or a non-KAN network.
Attribution attribution(const Network& net, const Eigen::MatrixXd& inputs);

}  // namespace kanc::nn
