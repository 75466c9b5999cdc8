#include "kanc/symbolic/regression.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "kanc/error.hpp"
#include "kanc/eval/metrics.hpp"

namespace kanc::symbolic {

int SrConfig::epochs_per_round() const {
  if (retrain_epochs >= 0) return retrain_epochs;
  return static_cast<int>(std::lround(retrain_fraction * base_budget));
}

namespace {

// The fit was chosen on thinned samples; reject it if it blows up anywhere
// on the full set of edge inputs.
bool finite_on(const EdgeFit& fit, const Eigen::RowVectorXd& x) {
  const BasicFunction& f = find_function(fit.function);
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    if (!std::isfinite(fit.c * f(fit.a * x[c] + fit.b) + fit.d)) return false;
  }
  return true;
}

void check_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.network.spec.family != nn::Family::Kan) throw ConfigError("symbolic regression needs a KAN checkpoint");
}

double round_mape(const nn::Network& net, const device::VoltageGridDataset& ds, device::Field field, double& test) {
  const eval::SplitMape m = eval::split_mape(net, ds, field);
  test = m.test;
  return m.train;
}

}  // namespace

std::vector<EdgeFit> best_fits(const nn::Network& net, const Eigen::MatrixXd& inputs, int max_samples) {
  const nn::KanTrace t = nn::trace(net, inputs);
  std::vector<EdgeFit> out;
  for (const EdgeSamples& s : edge_samples(net, inputs, max_samples)) {
    const std::size_t l = static_cast<std::size_t>(s.edge.layer);
    if (net.kan[l].edge(s.edge.out, s.edge.in).symbolic) continue;
    const Eigen::RowVectorXd full = t.node_inputs[l].row(s.edge.in);
    const std::vector<EdgeFit> ranked = suggest(s.x, s.y);
    auto pick = std::find_if(ranked.begin(), ranked.end(), [&](const EdgeFit& f) { return finite_on(f, full); });
    // "x" is finite everywhere, so some fit always survives
    EdgeFit best = pick != ranked.end() ? *pick : ranked.front();
    best.edge = s.edge;
    out.push_back(best);
  }
  return out;
}

SrResult iterative_sr(const nn::Checkpoint& ckpt, const device::VoltageGridDataset& ds, const SrConfig& config) {
  check_checkpoint(ckpt);
  if (config.k < 0) throw ConfigError(fmt::format("k must be >= 1, got {}", config.k));
  const device::Field field = device::parse_field(ckpt.meta.target);
  const train::GridTargets targets = train::grid_targets(ds, field);
  const train::Problem problem = train::device_problem(targets, config.a);
  train::TrainConfig defaults;
  defaults.family = nn::Family::Kan;
  defaults.target = field;
  train::LbfgsOptions options;
  options.lr = config.lr > 0.0 ? config.lr : defaults.initial_lr();
  const int epochs = config.epochs_per_round();

  SrResult r;
  r.checkpoint = ckpt;
  nn::Network& net = r.checkpoint.network;
  int total_epochs = ckpt.meta.epochs;
  for (int round = 1; !all_fixed(net); ++round) {
    std::vector<EdgeFit> fits = best_fits(net, targets.inputs, config.max_samples);
    // lowest R^2 first, edge order among ties
    std::stable_sort(fits.begin(), fits.end(), [](const EdgeFit& p, const EdgeFit& q) { return p.r2 < q.r2; });
    const std::size_t take = config.k == 0 ? fits.size() : std::min(fits.size(), static_cast<std::size_t>(config.k));
    fits.resize(take);
    SrRound log;
    log.round = round;
    for (EdgeFit& f : fits) {
      fix_edge(net, f);
      f.fixed = true;
      r.fits.push_back(f);
    }
    log.fixed = fits;
    if (epochs > 0) {
      const train::TrainResult t = train::train_lbfgs(net, problem, options, {}, epochs);
      log.epochs = t.checkpoint.meta.epochs;
      total_epochs += log.epochs;
      if (t.log.diverged) {
        r.diverged = true;
        log.loss = std::nan("");
        log.train_mape = round_mape(net, ds, field, log.test_mape);
        r.rounds.push_back(log);
        break;
      }
      net = t.checkpoint.network;
    }
    log.loss = train::evaluate_loss(net, problem);
    log.train_mape = round_mape(net, ds, field, log.test_mape);
    r.rounds.push_back(log);
  }
  // fitted affine parameters move during retraining; report the final ones
  for (EdgeFit& f : r.fits) {
    const nn::KanEdge& e = net.kan[static_cast<std::size_t>(f.edge.layer)].edge(f.edge.out, f.edge.in);
    f.a = e.symbolic->affine[0];
    f.b = e.symbolic->affine[1];
    f.c = e.symbolic->affine[2];
    f.d = e.symbolic->affine[3];
  }
  r.checkpoint.meta.epochs = total_epochs;
  r.checkpoint.meta.final_loss = train::evaluate_loss(net, problem);
  if (!r.diverged) r.formula = extract_formula(net, ckpt.meta.target);
  return r;
}

SrResult posthoc_sr(const nn::Checkpoint& ckpt, const device::VoltageGridDataset& ds, int max_samples) {
  SrConfig c;
  c.k = 0;
  c.retrain_epochs = 0;
  c.max_samples = max_samples;
  return iterative_sr(ckpt, ds, c);
}

std::string sr_log_text(const SrResult& r, const SrConfig& config) {
  std::string out;
  out += fmt::format("# k={}\n", config.k);
  out += fmt::format("# epochs_per_round={}\n", config.epochs_per_round());
  out += fmt::format("# max_samples={}\n", config.max_samples);
  out += fmt::format("# rounds={}\n", r.rounds.size());
  out += fmt::format("# diverged={}\n", r.diverged ? 1 : 0);
  out += "round,edge,function,a,b,c,d,r2,epochs,loss,train_mape,test_mape\n";
  for (const SrRound& round : r.rounds) {
    for (const EdgeFit& f : round.fixed) {
      out += fmt::format("{},{}:{}->{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{:.17g},{:.17g},{:.17g}\n",
                         round.round, f.edge.layer, f.edge.in, f.edge.out, f.function, f.a, f.b, f.c, f.d, f.r2,
                         round.epochs, round.loss, round.train_mape, round.test_mape);
    }
  }
  return out;
}

}  // namespace kanc::symbolic
