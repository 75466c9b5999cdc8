#include "kanc/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include <fmt/format.h>

#include "kanc/error.hpp"

namespace kanc::nn {

std::string_view family_name(Family f) {
  switch (f) {
    case Family::Mlp: return "MLP";
    case Family::Kan: return "KAN";
    case Family::Fkan: return "FKAN";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  if (name == "MLP") return Family::Mlp;
  if (name == "KAN") return Family::Kan;
  if (name == "FKAN") return Family::Fkan;
  throw ConfigError(fmt::format("unknown network family '{}'", name));
}

std::string_view conversion_name(Conversion c) {
  return c == Conversion::ExpCurrent ? "exp-current" : "charge-scale";
}

Conversion parse_conversion(std::string_view name) {
  if (name == "exp-current") return Conversion::ExpCurrent;
  if (name == "charge-scale") return Conversion::ChargeScale;
  throw ConfigError(fmt::format("unknown output conversion '{}'", name));
}

Conversion conversion_for(device::Field target) {
  return device::is_charge(target) ? Conversion::ChargeScale : Conversion::ExpCurrent;
}

void NetworkSpec::validate() const {
  if (widths.size() < 2) throw ShapeError("a network needs at least an input and an output width");
  for (int w : widths) {
    if (w < 1) throw ShapeError(fmt::format("layer widths must be positive, got {}", w));
  }
  if (family != Family::Mlp) {
    if (static_cast<int>(grid.size()) != num_layers()) {
      throw ShapeError(fmt::format("{} layers need {} grid sizes, got {}", num_layers(),
                                   num_layers(), grid.size()));
    }
    for (int g : grid) {
      if (g < 1) throw ShapeError(fmt::format("grid sizes must be positive, got {}", g));
    }
  }
  if (family == Family::Kan && (spline_order < 0 || spline_order > spline::kMaxOrder)) {
    throw ShapeError(fmt::format("unsupported spline order {}", spline_order));
  }
}

NetworkSpec mlp_spec(std::vector<int> widths, Conversion c, double input_scale) {
  NetworkSpec s;
  s.family = Family::Mlp;
  s.widths = std::move(widths);
  s.conversion = c;
  s.input_scale = input_scale;
  s.validate();
  return s;
}

NetworkSpec kan_spec(std::vector<int> widths, int grid, Conversion c, double input_scale,
                     int order) {
  NetworkSpec s;
  s.family = Family::Kan;
  s.widths = std::move(widths);
  s.grid.assign(s.widths.size() - 1, grid);
  s.spline_order = order;
  s.conversion = c;
  s.input_scale = input_scale;
  s.validate();
  return s;
}

NetworkSpec fkan_spec(std::vector<int> widths, std::vector<int> grid, Conversion c,
                      double input_scale) {
  NetworkSpec s;
  s.family = Family::Fkan;
  s.widths = std::move(widths);
  s.grid = std::move(grid);
  s.conversion = c;
  s.input_scale = input_scale;
  s.validate();
  return s;
}

NetworkSpec preset(std::string_view name, device::Field target) {
  const Conversion c = conversion_for(target);
  const bool charge = device::is_charge(target);
  if (name == "MLP1") return mlp_spec({2, 16, 16, 1}, c);
  if (name == "MLP2") return mlp_spec({2, 16, 16, 16, 1}, c);
  if (name == "KAN1") return kan_spec(charge ? std::vector{2, 3, 1} : std::vector{2, 3, 1, 1}, 16, c);
  if (name == "KAN2") {
    return kan_spec(charge ? std::vector{2, 3, 3, 1} : std::vector{2, 3, 3, 1, 1}, 16, c);
  }
  if (name == "FKAN1") return fkan_spec({2, 8, 1}, {8, 8}, c);
  if (name == "FKAN2") return fkan_spec({2, 8, 8, 1}, {8, 2, 8}, c);
  throw ConfigError(fmt::format("unknown architecture '{}'", name));
}

long param_count(const NetworkSpec& spec) {
  spec.validate();
  long total = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const long in = spec.widths[static_cast<std::size_t>(l)];
    const long out = spec.widths[static_cast<std::size_t>(l) + 1];
    switch (spec.family) {
      case Family::Mlp: total += in * out + out; break;
      case Family::Fkan: total += 2L * spec.grid[static_cast<std::size_t>(l)] * in * out + out; break;
      case Family::Kan:
        total += in * out * (spec.grid[static_cast<std::size_t>(l)] + spec.spline_order + 2) + out;
        break;
    }
  }
  return total;
}

double KanEdge::operator()(double x) const {
  if (symbolic) {
    const auto& p = symbolic->affine;
    return p[2] * (*symbolic->function)(p[0] * x + p[1]) + p[3];
  }
  return spline::spline_eval(activation, x);
}

Network Network::initialize(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Network net;
  net.spec = spec;
  std::mt19937_64 rng(seed);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int in = spec.widths[static_cast<std::size_t>(l)];
    const int out = spec.widths[static_cast<std::size_t>(l) + 1];
    switch (spec.family) {
      case Family::Mlp: {
        const double limit = std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> u(-limit, limit);
        DenseLayer layer;
        layer.weight.resize(out, in);
        for (Eigen::Index e = 0; e < layer.weight.size(); ++e) layer.weight(e) = u(rng);
        layer.bias = Eigen::VectorXd::Zero(out);
        net.dense.push_back(std::move(layer));
        break;
      }
      case Family::Kan: {
        std::normal_distribution<double> n(0.0, 0.1);
        KanLayer layer;
        layer.in = in;
        layer.out = out;
        const spline::KnotVector kv(spec.grid[static_cast<std::size_t>(l)], spec.spline_order);
        for (int e = 0; e < in * out; ++e) {
          spline::SplineActivation act(kv);
          for (Eigen::Index c = 0; c < act.coeffs.size(); ++c) act.coeffs[c] = n(rng);
          layer.edges.push_back(KanEdge{std::move(act), std::nullopt});
        }
        layer.bias = Eigen::VectorXd::Zero(out);
        net.kan.push_back(std::move(layer));
        break;
      }
      case Family::Fkan: {
        const int g = spec.grid[static_cast<std::size_t>(l)];
        std::normal_distribution<double> n(0.0, 1.0 / (in * std::sqrt(static_cast<double>(g))));
        FourierLayer layer;
        layer.in = in;
        layer.out = out;
        layer.grid = g;
        layer.cos_coef.resize(out, in * g);
        layer.sin_coef.resize(out, in * g);
        for (Eigen::Index e = 0; e < layer.cos_coef.size(); ++e) layer.cos_coef(e) = n(rng);
        for (Eigen::Index e = 0; e < layer.sin_coef.size(); ++e) layer.sin_coef(e) = n(rng);
        layer.bias = Eigen::VectorXd::Zero(out);
        net.fourier.push_back(std::move(layer));
        break;
      }
    }
  }
  return net;
}

int Network::num_edges() const {
  int n = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    n += spec.widths[static_cast<std::size_t>(l)] * spec.widths[static_cast<std::size_t>(l) + 1];
  }
  return n;
}

namespace {

// Visits every trainable array as (name, data, rows, cols). The order defines
// the flat parameter layout and the leaf order of bind().
template <typename Net, typename F>
void walk(Net& net, F&& f) {
  const NetworkSpec& spec = net.spec;
  for (int l = 0; l < spec.num_layers(); ++l) {
    switch (spec.family) {
      case Family::Mlp: {
        auto& layer = net.dense[static_cast<std::size_t>(l)];
        f(fmt::format("mlp.{}.weight", l), layer.weight.data(), layer.weight.rows(),
          layer.weight.cols());
        f(fmt::format("mlp.{}.bias", l), layer.bias.data(), layer.bias.size(), Eigen::Index{1});
        break;
      }
      case Family::Kan: {
        auto& layer = net.kan[static_cast<std::size_t>(l)];
        for (int j = 0; j < layer.out; ++j) {
          for (int i = 0; i < layer.in; ++i) {
            auto& edge = layer.edge(j, i);
            const std::string base = fmt::format("kan.{}.edge.{}.{}", l, j, i);
            if (edge.symbolic) {
              f(base + ".affine", edge.symbolic->affine.data(), Eigen::Index{4}, Eigen::Index{1});
            } else {
              auto& act = edge.activation;
              f(base + ".coeffs", act.coeffs.data(), act.coeffs.size(), Eigen::Index{1});
              f(base + ".w_b", &act.w_b, Eigen::Index{1}, Eigen::Index{1});
              f(base + ".w_s", &act.w_s, Eigen::Index{1}, Eigen::Index{1});
            }
          }
        }
        f(fmt::format("kan.{}.bias", l), layer.bias.data(), layer.bias.size(), Eigen::Index{1});
        break;
      }
      case Family::Fkan: {
        auto& layer = net.fourier[static_cast<std::size_t>(l)];
        f(fmt::format("fkan.{}.cos", l), layer.cos_coef.data(), layer.cos_coef.rows(),
          layer.cos_coef.cols());
        f(fmt::format("fkan.{}.sin", l), layer.sin_coef.data(), layer.sin_coef.rows(),
          layer.sin_coef.cols());
        f(fmt::format("fkan.{}.bias", l), layer.bias.data(), layer.bias.size(), Eigen::Index{1});
        break;
      }
    }
  }
}

}  // namespace

std::vector<ParamBlock> parameter_blocks(const Network& net) {
  std::vector<ParamBlock> blocks;
  walk(net, [&](std::string name, const double*, Eigen::Index r, Eigen::Index c) {
    blocks.push_back(ParamBlock{std::move(name), r, c});
  });
  return blocks;
}

std::vector<ad::Matrix> parameter_values(const Network& net) {
  std::vector<ad::Matrix> values;
  walk(net, [&](const std::string&, const double* d, Eigen::Index r, Eigen::Index c) {
    values.emplace_back(Eigen::Map<const ad::Matrix>(d, r, c));
  });
  return values;
}

Eigen::VectorXd flatten(const Network& net) {
  Eigen::Index n = 0;
  walk(net, [&](const std::string&, const double*, Eigen::Index r, Eigen::Index c) { n += r * c; });
  Eigen::VectorXd flat(n);
  Eigen::Index at = 0;
  walk(net, [&](const std::string&, const double* d, Eigen::Index r, Eigen::Index c) {
    flat.segment(at, r * c) = Eigen::Map<const Eigen::VectorXd>(d, r * c);
    at += r * c;
  });
  return flat;
}

void assign(Network& net, const Eigen::VectorXd& flat) {
  Eigen::Index at = 0;
  walk(net, [&](const std::string& name, double* d, Eigen::Index r, Eigen::Index c) {
    if (at + r * c > flat.size()) {
      throw ShapeError(fmt::format("flat parameter vector too short at {}", name));
    }
    Eigen::Map<Eigen::VectorXd>(d, r * c) = flat.segment(at, r * c);
    at += r * c;
  });
  if (at != flat.size()) {
    throw ShapeError(
        fmt::format("flat parameter vector has {} entries, network needs {}", flat.size(), at));
  }
}

BoundNetwork bind(const Network& net, ad::Tape& tape, ad::NodeId inputs, bool trainable) {
  const NetworkSpec& spec = net.spec;
  if (tape.value(inputs).rows() != spec.widths.front()) {
    throw ShapeError(fmt::format("network expects {} input rows, got {}", spec.widths.front(),
                                 tape.value(inputs).rows()));
  }
  BoundNetwork bound;
  walk(net, [&](const std::string&, const double* d, Eigen::Index r, Eigen::Index c) {
    ad::Matrix m = Eigen::Map<const ad::Matrix>(d, r, c);
    bound.params.push_back(trainable ? tape.leaf(std::move(m)) : tape.constant(std::move(m)));
  });
  std::size_t cursor = 0;
  auto next = [&] { return bound.params[cursor++]; };

  const ad::NodeId scaled = tape.scale(inputs, spec.input_scale);
  switch (spec.family) {
    case Family::Mlp: {
      ad::NodeId h = scaled;
      for (int l = 0; l < spec.num_layers(); ++l) {
        const ad::NodeId w = next();
        const ad::NodeId b = next();
        const ad::NodeId z = tape.add_column(tape.matmul(w, h), b);
        h = l + 1 < spec.num_layers() ? tape.tanh(z) : z;
      }
      bound.output = h;
      break;
    }
    case Family::Kan: {
      std::vector<ad::NodeId> xs;
      for (int i = 0; i < spec.widths.front(); ++i) xs.push_back(tape.row(scaled, i));
      for (int l = 0; l < spec.num_layers(); ++l) {
        const KanLayer& layer = net.kan[static_cast<std::size_t>(l)];
        std::vector<std::optional<ad::NodeId>> base(static_cast<std::size_t>(layer.in));
        std::vector<std::optional<ad::NodeId>> sums(static_cast<std::size_t>(layer.out));
        for (int j = 0; j < layer.out; ++j) {
          for (int i = 0; i < layer.in; ++i) {
            const KanEdge& edge = layer.edge(j, i);
            const ad::NodeId x = xs[static_cast<std::size_t>(i)];
            ad::NodeId e;
            if (edge.symbolic) {
              const ad::NodeId p = next();
              const ad::NodeId arg = tape.add_scalar(tape.mul_scalar(x, tape.row(p, 0)), tape.row(p, 1));
              const ad::NodeId f = tape.unary(arg, edge.symbolic->function->unary);
              e = tape.add_scalar(tape.mul_scalar(f, tape.row(p, 2)), tape.row(p, 3));
            } else {
              const ad::NodeId coeffs = next();
              const ad::NodeId wb = next();
              const ad::NodeId ws = next();
              auto& silu = base[static_cast<std::size_t>(i)];
              if (!silu) silu = tape.silu(x);
              const auto knots = std::make_shared<const spline::KnotVector>(edge.activation.knots);
              e = tape.add(tape.mul_scalar(*silu, wb),
                           tape.mul_scalar(tape.spline(x, coeffs, knots), ws));
            }
            auto& acc = sums[static_cast<std::size_t>(j)];
            acc = acc ? tape.add(*acc, e) : e;
          }
        }
        const ad::NodeId bias = next();
        xs.clear();
        for (int j = 0; j < layer.out; ++j) {
          xs.push_back(tape.add_scalar(*sums[static_cast<std::size_t>(j)], tape.row(bias, j)));
        }
      }
      bound.output = xs.front();
      break;
    }
    case Family::Fkan: {
      ad::NodeId h = scaled;
      for (int l = 0; l < spec.num_layers(); ++l) {
        const FourierLayer& layer = net.fourier[static_cast<std::size_t>(l)];
        const ad::NodeId a = next();
        const ad::NodeId b = next();
        const ad::NodeId bias = next();
        const ad::NodeId c = tape.matmul(a, tape.harmonics(h, layer.grid, false));
        const ad::NodeId s = tape.matmul(b, tape.harmonics(h, layer.grid, true));
        h = tape.add_column(tape.add(c, s), bias);
      }
      bound.output = h;
      break;
    }
  }
  return bound;
}

Eigen::RowVectorXd predict(const Network& net, const Eigen::MatrixXd& inputs) {
  ad::Tape tape;
  const ad::NodeId in = tape.constant(inputs);
  const BoundNetwork b = bind(net, tape, in, false);
  return tape.value(b.output).row(0);
}

double predict(const Network& net, double vd, double vg) {
  Eigen::MatrixXd x(2, 1);
  x << vd, vg;
  return predict(net, x)(0);
}

double to_target_units(Conversion c, double y) {
  return c == Conversion::ExpCurrent ? std::exp(y) : y;
}

Eigen::RowVectorXd to_target_units(Conversion c, const Eigen::RowVectorXd& y) {
  return c == Conversion::ExpCurrent ? Eigen::RowVectorXd(y.array().exp()) : y;
}

KanTrace trace(const Network& net, const Eigen::MatrixXd& inputs) {
  if (net.spec.family != Family::Kan) throw DomainError("trace is defined for KAN networks only");
  KanTrace t;
  Eigen::MatrixXd x = inputs * net.spec.input_scale;
  const Eigen::Index n = x.cols();
  for (const KanLayer& layer : net.kan) {
    t.node_inputs.push_back(x);
    std::vector<Eigen::RowVectorXd> edges;
    Eigen::MatrixXd next(layer.out, n);
    for (int j = 0; j < layer.out; ++j) next.row(j).setConstant(layer.bias[j]);
    for (int j = 0; j < layer.out; ++j) {
      for (int i = 0; i < layer.in; ++i) {
        const KanEdge& edge = layer.edge(j, i);
        Eigen::RowVectorXd e(n);
        for (Eigen::Index c = 0; c < n; ++c) e(c) = edge(x(i, c));
        next.row(j) += e;
        edges.push_back(std::move(e));
      }
    }
    t.edge_outputs.push_back(std::move(edges));
    x = std::move(next);
  }
  t.output = x.row(0);
  return t;
}

void refine(Network& net, int new_grid) {
  if (net.spec.family != Family::Kan) throw RefinementError("only KAN networks carry spline grids");
  for (std::size_t l = 0; l < net.kan.size(); ++l) {
    for (KanEdge& edge : net.kan[l].edges) {
      edge.activation = spline::refine(edge.activation, new_grid);
    }
    net.spec.grid[l] = new_grid;
  }
}

void refine(Network& net, int new_grid, const Eigen::MatrixXd& inputs) {
  if (net.spec.family != Family::Kan) throw RefinementError("only KAN networks carry spline grids");
  if (inputs.cols() == 0) {
    refine(net, new_grid);
    return;
  }
  const KanTrace t = trace(net, inputs);
  for (std::size_t l = 0; l < net.kan.size(); ++l) {
    KanLayer& layer = net.kan[l];
    for (int i = 0; i < layer.in; ++i) {
      const double lo = t.node_inputs[l].row(i).minCoeff();
      const double hi = t.node_inputs[l].row(i).maxCoeff();
      for (int j = 0; j < layer.out; ++j) {
        KanEdge& edge = layer.edge(j, i);
        edge.activation = spline::refine(edge.activation, new_grid, lo, hi);
      }
    }
    net.spec.grid[l] = new_grid;
  }
}

Attribution attribution(const Network& net, const Eigen::MatrixXd& inputs) {
  if (inputs.cols() == 0) throw DomainError("attribution needs a nonempty sample");
  const KanTrace t = trace(net, inputs);
  Attribution a;
  for (std::size_t l = 0; l < net.kan.size(); ++l) {
    const KanLayer& layer = net.kan[l];
    Eigen::MatrixXd s(layer.out, layer.in);
    for (int j = 0; j < layer.out; ++j) {
      for (int i = 0; i < layer.in; ++i) {
        const Eigen::RowVectorXd& e = t.edge_outputs[l][static_cast<std::size_t>(j * layer.in + i)];
        const double mean = e.mean();
        s(j, i) = std::sqrt((e.array() - mean).square().mean());
      }
    }
    const double top = s.maxCoeff();
    if (top > 0.0) s /= top;
    a.node.push_back(s.colwise().maxCoeff().transpose());
    a.edge.push_back(std::move(s));
  }
  a.node.push_back(Eigen::VectorXd::Ones(net.spec.widths.back()));
  return a;
}

}  // namespace kanc::nn
