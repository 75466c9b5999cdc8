#include "kanc/symbolic/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "kanc/error.hpp"

namespace kanc::symbolic {

std::vector<EdgeId> edge_ids(const nn::Network& net) {
  std::vector<EdgeId> ids;
  for (std::size_t l = 0; l < net.kan.size(); ++l) {
    const nn::KanLayer& layer = net.kan[l];
    for (int j = 0; j < layer.out; ++j) {
      for (int i = 0; i < layer.in; ++i) ids.push_back({static_cast<int>(l), j, i});
    }
  }
  return ids;
}

int edge_index(const nn::Network& net, EdgeId id) {
  if (id.layer < 0 || id.layer >= static_cast<int>(net.kan.size())) {
    throw ConfigError(fmt::format("no KAN layer {}", id.layer));
  }
  const nn::KanLayer& layer = net.kan[static_cast<std::size_t>(id.layer)];
  if (id.out < 0 || id.out >= layer.out || id.in < 0 || id.in >= layer.in) {
    throw ConfigError(fmt::format("no edge {}->{} in layer {}", id.in, id.out, id.layer));
  }
  int index = 0;
  for (int l = 0; l < id.layer; ++l) index += static_cast<int>(net.kan[static_cast<std::size_t>(l)].edges.size());
  return index + id.out * layer.in + id.in;
}

namespace {

struct Moments {
  double mean_y = 0.0;
  double syy = 0.0;
};

struct Candidate {
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
  double r2 = -std::numeric_limits<double>::infinity();
};

// Least squares (c, d) for fixed (a, b). False when f blows up or is flat.
bool affine_fit(std::span<const double> x, std::span<const double> y, const Moments& m,
                const BasicFunction& f, double a, double b, std::vector<double>& u, Candidate& out) {
  const std::size_t n = x.size();
  double mean_u = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    u[k] = f(a * x[k] + b);
    if (!std::isfinite(u[k])) return false;
    mean_u += u[k];
  }
  mean_u /= static_cast<double>(n);
  double suu = 0.0;
  double suy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double du = u[k] - mean_u;
    suu += du * du;
    suy += du * (y[k] - m.mean_y);
  }
  if (!(suu > 0.0) || !std::isfinite(suu) || !std::isfinite(suy)) return false;
  out.a = a;
  out.b = b;
  out.c = suy / suu;
  out.d = m.mean_y - out.c * mean_u;
  out.r2 = std::min(1.0, suy * suy / (suu * m.syy));
  return std::isfinite(out.r2);
}

}  // namespace

EdgeFit fit_basic(std::span<const double> x, std::span<const double> y, const BasicFunction& f) {
  if (x.size() != y.size()) throw ShapeError(fmt::format("fit_basic: {} x values, {} y values", x.size(), y.size()));
  if (static_cast<int>(x.size()) < kMinFitSamples) {
    throw DomainError(fmt::format("fit_basic needs at least {} samples, got {}", kMinFitSamples, x.size()));
  }
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (!(*hi > *lo) || !std::isfinite(*lo) || !std::isfinite(*hi)) {
    throw DomainError("fit_basic needs samples spanning a nondegenerate x interval");
  }
  const double n = static_cast<double>(y.size());
  Moments m;
  for (double v : y) {
    if (!std::isfinite(v)) throw DomainError("fit_basic: non-finite y sample");
    m.mean_y += v;
  }
  m.mean_y /= n;
  for (double v : y) m.syy += (v - m.mean_y) * (v - m.mean_y);

  EdgeFit fit;
  fit.function = std::string(f.name());
  const double tiny = 1e-12 * std::max(1.0, std::abs(m.mean_y));
  if (m.syy <= n * tiny * tiny) {
    fit.c = 0.0;
    fit.d = m.mean_y;
    fit.r2 = 1.0;
    return fit;
  }

  std::vector<double> u(x.size());
  Candidate best;
  double ca = 0.0;
  double cb = 0.0;
  double half = kAffineRange;
  for (int level = 0; level < 3; ++level) {
    const double step = half / 10.0;
    Candidate level_best = best;
    for (int ia = -10; ia <= 10; ++ia) {
      const double a = ca + ia * step;
      if (std::abs(a) > kAffineRange + 1e-12) continue;
      for (int ib = -10; ib <= 10; ++ib) {
        const double b = cb + ib * step;
        if (std::abs(b) > kAffineRange + 1e-12) continue;
        Candidate trial;
        if (affine_fit(x, y, m, f, a, b, u, trial) && trial.r2 > level_best.r2) level_best = trial;
      }
    }
    best = level_best;
    if (!std::isfinite(best.r2)) break;  // nothing usable on the coarse grid
    ca = best.a;
    cb = best.b;
    half /= 10.0;
  }
  if (!std::isfinite(best.r2)) {
    fit.c = 0.0;
    fit.d = m.mean_y;
    fit.r2 = 0.0;
    return fit;
  }
  fit.a = best.a;
  fit.b = best.b;
  fit.c = best.c;
  fit.d = best.d;
  fit.r2 = best.r2;
  return fit;
}

std::vector<EdgeFit> suggest(std::span<const double> x, std::span<const double> y,
                             std::span<const BasicFunction> functions) {
  std::vector<EdgeFit> fits;
  fits.reserve(functions.size());
  for (const BasicFunction& f : functions) fits.push_back(fit_basic(x, y, f));
  std::stable_sort(fits.begin(), fits.end(), [](const EdgeFit& p, const EdgeFit& q) { return p.r2 > q.r2; });
  return fits;
}

std::vector<EdgeSamples> edge_samples(const nn::Network& net, const Eigen::MatrixXd& inputs, int max_samples) {
  const nn::KanTrace t = nn::trace(net, inputs);
  const Eigen::Index n = inputs.cols();
  std::vector<Eigen::Index> keep;
  if (max_samples <= 0 || n <= max_samples) {
    for (Eigen::Index c = 0; c < n; ++c) keep.push_back(c);
  } else {
    for (int k = 0; k < max_samples; ++k) {
      keep.push_back(static_cast<Eigen::Index>((static_cast<double>(k) * (n - 1)) / (max_samples - 1) + 0.5));
    }
  }
  std::vector<EdgeSamples> out;
  for (const EdgeId& id : edge_ids(net)) {
    const std::size_t l = static_cast<std::size_t>(id.layer);
    const int in = net.kan[l].in;
    EdgeSamples s{id, {}, {}};
    s.x.reserve(keep.size());
    s.y.reserve(keep.size());
    for (Eigen::Index c : keep) {
      s.x.push_back(t.node_inputs[l](id.in, c));
      s.y.push_back(t.edge_outputs[l][static_cast<std::size_t>(id.out * in + id.in)](c));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void fix_edge(nn::Network& net, const EdgeFit& fit) {
  edge_index(net, fit.edge);
  nn::KanEdge& edge = net.kan[static_cast<std::size_t>(fit.edge.layer)].edge(fit.edge.out, fit.edge.in);
  if (edge.symbolic) {
    throw DomainError(fmt::format("edge {}->{} of layer {} is already fixed", fit.edge.in, fit.edge.out,
                                  fit.edge.layer));
  }
  edge.symbolic = nn::SymbolicEdge{&find_function(fit.function), Eigen::Vector4d(fit.a, fit.b, fit.c, fit.d)};
}

bool all_fixed(const nn::Network& net) {
  if (net.spec.family != nn::Family::Kan) return false;
  for (const nn::KanLayer& layer : net.kan) {
    for (const nn::KanEdge& e : layer.edges) {
      if (!e.symbolic) return false;
    }
  }
  return true;
}

int parse_variable(const std::string& name) {
  if (name == "V_D" || name == "0") return 0;
  if (name == "V_G" || name == "1") return 1;
  throw ConfigError(fmt::format("unknown input variable '{}'", name));
}

void ablate_variable(nn::Network& net, int variable) {
  if (net.spec.family != nn::Family::Kan || net.kan.empty()) throw ConfigError("ablation needs a KAN network");
  nn::KanLayer& first = net.kan.front();
  if (variable < 0 || variable >= first.in) {
    throw ConfigError(fmt::format("network has no input variable {}", variable));
  }
  for (int j = 0; j < first.out; ++j) {
    nn::KanEdge& e = first.edge(j, variable);
    const double value = e(0.0);
    e.symbolic = nn::SymbolicEdge{&find_function("x"), Eigen::Vector4d(0.0, 0.0, 0.0, value)};
  }
}

}  // namespace kanc::symbolic
