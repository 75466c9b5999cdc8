#include "kanc/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <limits>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "kanc/error.hpp"
#include "kanc/eval/metrics.hpp"

namespace kanc::train {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

// ---------------------------------------------------------------- config

std::string TrainConfig::arch_name() const {
  if (!arch.empty()) return arch;
  switch (family) {
    case nn::Family::Mlp: return "MLP1";
    case nn::Family::Kan: return "KAN1";
    case nn::Family::Fkan: return "FKAN1";
  }
  return "MLP1";
}

int TrainConfig::budget() const {
  if (epochs >= 0) return epochs;
  switch (family) {
    case nn::Family::Mlp: return full_budget ? kMlpFullEpochs : kMlpDeskEpochs;
    case nn::Family::Kan: return kKanEpochs;
    case nn::Family::Fkan: return full_budget ? kFkanFullEpochs : kFkanDeskEpochs;
  }
  return 0;
}

double TrainConfig::initial_lr() const {
  if (lr > 0.0) return lr;
  const bool charge = device::is_charge(target);
  switch (family) {
    case nn::Family::Mlp: return charge ? 0.01 : 0.005;
    case nn::Family::Kan: return charge ? 1.0 : 0.1;
    case nn::Family::Fkan: return 0.002;
  }
  return 0.0;
}

void TrainConfig::validate() const {
  if (!(a > 0.0)) throw ConfigError(fmt::format("loss weight a must be positive, got {}", a));
  if (epochs < -1) throw ConfigError(fmt::format("epoch budget must be non-negative, got {}", epochs));
  if (lr < 0.0) throw ConfigError("learning rate must be positive");
  if (!device::is_supported_step(step_mv)) {
    throw ConfigError(fmt::format("unsupported dataset step {} mV", step_mv));
  }
  const nn::NetworkSpec spec = nn::preset(arch_name(), target);
  if (spec.family != family) {
    throw ConfigError(fmt::format("architecture {} is not a {} network", arch_name(),
                                  nn::family_name(family)));
  }
  if (family == nn::Family::Kan) {
    if (ladder.empty()) throw ConfigError("refinement ladder is empty");
    for (std::size_t i = 0; i < ladder.size(); ++i) {
      if (ladder[i] < 1) throw ConfigError("grid sizes must be positive");
      if (i > 0 && ladder[i] <= ladder[i - 1]) {
        throw ConfigError(fmt::format("ladder must be strictly increasing: {}", fmt::join(ladder, ",")));
      }
    }
  }
  if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
  if (plateau_window < 1 || !(plateau_threshold >= 0.0) || !(plateau_factor > 0.0 && plateau_factor < 1.0)) {
    throw ConfigError("invalid plateau schedule");
  }
  if (!(decay_factor > 0.0 && decay_factor <= 1.0) || decay_every < 0) {
    throw ConfigError("invalid step decay schedule");
  }
  if (lbfgs_history < 1) throw ConfigError("lbfgs history must be at least 1");
}

namespace {

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("bad integer list '{}'", s));
    }
  }
  return out;
}

}  // namespace

TrainConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree root;
  try {
    std::istringstream is(text);
    pt::read_ini(is, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("bad config: {}", e.what()));
  }
  const pt::ptree& tree = root.get_child_optional("train") ? root.get_child("train") : root;
  TrainConfig c;
  try {
    for (const auto& [key, node] : tree) {
      const std::string v = node.get_value<std::string>();
      if (key == "family") c.family = nn::parse_family(v);
      else if (key == "arch") c.arch = v;
      else if (key == "target") c.target = device::parse_field(v);
      else if (key == "step") c.step_mv = node.get_value<int>();
      else if (key == "seed") c.seed = node.get_value<std::uint64_t>();
      else if (key == "a") c.a = node.get_value<double>();
      else if (key == "epochs") c.epochs = node.get_value<int>();
      else if (key == "full_budget") c.full_budget = node.get_value<bool>();
      else if (key == "lr") c.lr = node.get_value<double>();
      else if (key == "ladder") c.ladder = parse_ints(v);
      else if (key == "weight_decay") c.weight_decay = node.get_value<double>();
      else if (key == "plateau_window") c.plateau_window = node.get_value<int>();
      else if (key == "plateau_threshold") c.plateau_threshold = node.get_value<double>();
      else if (key == "plateau_factor") c.plateau_factor = node.get_value<double>();
      else if (key == "lr_floor") c.lr_floor = node.get_value<double>();
      else if (key == "decay_factor") c.decay_factor = node.get_value<double>();
      else if (key == "decay_every") c.decay_every = node.get_value<int>();
      else if (key == "lbfgs_history") c.lbfgs_history = node.get_value<int>();
      else if (!node.empty()) continue;  // other sections
      else throw ConfigError(fmt::format("unknown config key '{}'", key));
    }
  } catch (const pt::ptree_bad_data& e) {
    throw ConfigError(fmt::format("bad config value: {}", e.what()));
  }
  if (c.arch.empty() == false) {
    const nn::NetworkSpec spec = nn::preset(c.arch, c.target);
    if (tree.find("family") == tree.not_found()) c.family = spec.family;
  }
  c.validate();
  return c;
}

TrainConfig read_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError(fmt::format("cannot open config {}", path.string()));
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str());
}

std::string config_text(const TrainConfig& c) {
  std::string s = "[train]\n";
  s += fmt::format("family={}\narch={}\ntarget={}\nstep={}\nseed={}\na={:.17g}\n", nn::family_name(c.family),
                   c.arch_name(), device::field_name(c.target), c.step_mv, c.seed, c.a);
  s += fmt::format("epochs={}\nfull_budget={}\nlr={:.17g}\nladder={}\n", c.budget(), c.full_budget,
                   c.initial_lr(), fmt::join(c.ladder, ","));
  s += fmt::format("weight_decay={:.17g}\nplateau_window={}\nplateau_threshold={:.17g}\n", c.weight_decay,
                   c.plateau_window, c.plateau_threshold);
  s += fmt::format("plateau_factor={:.17g}\nlr_floor={:.17g}\ndecay_factor={:.17g}\ndecay_every={}\n",
                   c.plateau_factor, c.lr_floor, c.decay_factor, c.decay_every);
  s += fmt::format("lbfgs_history={}\n", c.lbfgs_history);
  return s;
}

// ---------------------------------------------------------------- log

void TrainLog::record(int e, double l, double rate, int s) {
  epoch.push_back(e);
  loss.push_back(l);
  lr.push_back(rate);
  stage.push_back(s);
}

std::string log_text(const TrainLog& log) {
  std::string s;
  for (const auto& [k, v] : log.settings) s += fmt::format("# {}={}\n", k, v);
  s += fmt::format("# diverged={}\n", log.diverged);
  s += "epoch,loss,lr,stage\n";
  for (std::size_t i = 0; i < log.epoch.size(); ++i) {
    s += fmt::format("{},{:.17g},{:.17g},{}\n", log.epoch[i], log.loss[i], log.lr[i], log.stage[i]);
  }
  return s;
}

void write_log(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(fmt::format("cannot write log {}", path.string()));
  os << log_text(log);
}

// ---------------------------------------------------------------- objective

Problem device_problem(const GridTargets& targets, double a) {
  auto shared = std::make_shared<const GridTargets>(targets);
  return Problem{targets.inputs, [shared, a](ad::Tape& tape, ad::NodeId y) {
                   return device_loss(tape, y, *shared, a);
                 }};
}

Problem mse_problem(Eigen::MatrixXd inputs, Eigen::RowVectorXd targets) {
  if (inputs.cols() != targets.size()) throw ShapeError("inputs and targets differ in length");
  return Problem{std::move(inputs), [t = std::move(targets)](ad::Tape& tape, ad::NodeId y) {
                   return mse_node(tape, y, t);
                 }};
}

NetworkObjective::NetworkObjective(const nn::Network& net, const Problem& problem)
    : blocks_(nn::parameter_blocks(net)) {
  const ad::NodeId in = tape_.constant(problem.inputs);
  bound_ = nn::bind(net, tape_, in, true);
  loss_ = problem.loss(tape_, bound_.output);
}

namespace {

std::vector<ad::Matrix> unflatten(const std::vector<nn::ParamBlock>& blocks, const Eigen::VectorXd& x) {
  std::vector<ad::Matrix> out;
  out.reserve(blocks.size());
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.emplace_back(Eigen::Map<const ad::Matrix>(x.data() + at, b.rows, b.cols));
    at += b.rows * b.cols;
  }
  if (at != x.size()) throw ShapeError("parameter vector does not match the network");
  return out;
}

}  // namespace

double NetworkObjective::operator()(const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
  try {
    tape_.forward(unflatten(blocks_, x));
  } catch (const EvaluationError&) {
    return kNaN;
  }
  const double f = tape_.scalar(loss_);
  if (grad) {
    const std::vector<ad::Matrix> g = tape_.backward(loss_);
    grad->resize(x.size());
    Eigen::Index at = 0;
    for (const auto& m : g) {
      grad->segment(at, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
      at += m.size();
    }
  }
  return f;
}

Objective NetworkObjective::function() {
  return [this](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return (*this)(x, g); };
}

Eigen::RowVectorXd NetworkObjective::output(const Eigen::VectorXd& x) {
  tape_.forward(unflatten(blocks_, x));
  return tape_.value(bound_.output);
}

double evaluate_loss(const nn::Network& net, const Problem& problem) {
  NetworkObjective obj(net, problem);
  return obj(nn::flatten(net), nullptr);
}

// ---------------------------------------------------------------- Adam

double step_decay_lr(double lr0, double factor, int every, int epoch) {
  if (every < 1) throw DomainError("decay interval must be positive");
  return lr0 * std::pow(factor, static_cast<double>(epoch / every));
}

TrainResult train_adam(nn::Network net, const Problem& problem, const AdamSchedule& sc) {
  const auto start = Clock::now();
  TrainResult r;
  TrainLog& log = r.log;
  log.settings = {{"optimizer", "adam"},
                  {"beta1", fmt::format("{}", sc.adam.beta1)},
                  {"beta2", fmt::format("{}", sc.adam.beta2)},
                  {"eps", fmt::format("{}", sc.adam.eps)},
                  {"weight_decay", fmt::format("{}", sc.adam.weight_decay)},
                  {"lr0", fmt::format("{}", sc.adam.lr)},
                  {"epochs", fmt::format("{}", sc.epochs)}};
  if (sc.kind == AdamSchedule::Kind::Plateau) {
    log.settings.emplace_back("schedule", "plateau");
    log.settings.emplace_back("plateau_window", fmt::format("{}", sc.plateau_window));
    log.settings.emplace_back("plateau_threshold", fmt::format("{}", sc.plateau_threshold));
    log.settings.emplace_back("plateau_factor", fmt::format("{}", sc.plateau_factor));
    log.settings.emplace_back("lr_floor", fmt::format("{}", sc.lr_floor));
  } else {
    log.settings.emplace_back("schedule", "step");
    log.settings.emplace_back("decay_factor", fmt::format("{}", sc.decay_factor));
    log.settings.emplace_back("decay_every", fmt::format("{}", sc.decay_every));
  }
  log.stage_start.push_back(0);

  NetworkObjective obj(net, problem);
  Eigen::VectorXd x = nn::flatten(net);
  Eigen::VectorXd last = x;
  Eigen::VectorXd grad(x.size());
  Adam adam(sc.adam, x.size());
  double best = std::numeric_limits<double>::infinity();
  int bad = 0;
  int done = 0;
  for (int e = 0; e < sc.epochs; ++e) {
    if (sc.kind == AdamSchedule::Kind::StepDecay) {
      adam.set_lr(step_decay_lr(sc.adam.lr, sc.decay_factor, sc.decay_every, e));
    }
    const double f = obj(x, &grad);
    if (!std::isfinite(f) || !grad.allFinite()) {
      log.diverged = true;
      x = last;
      break;
    }
    log.record(e, f, adam.lr(), 0);
    last = x;
    adam.step(x, grad);
    done = e + 1;
    if (sc.kind == AdamSchedule::Kind::Plateau) {
      if (f < best * (1.0 - sc.plateau_threshold)) {
        best = f;
        bad = 0;
      } else if (++bad > sc.plateau_window) {
        adam.set_lr(adam.lr() * sc.plateau_factor);
        bad = 0;
      }
      if (adam.lr() < sc.lr_floor) break;
    }
  }
  double final_loss = obj(x, nullptr);
  if (!std::isfinite(final_loss) && !log.diverged) {
    log.diverged = true;
    x = last;
    final_loss = obj(x, nullptr);
  }
  nn::assign(net, x);
  r.checkpoint = nn::Checkpoint{std::move(net), {}};
  r.checkpoint.meta.epochs = done;
  r.checkpoint.meta.final_loss = final_loss;
  log.wall_seconds = seconds_since(start);
  return r;
}

// ---------------------------------------------------------------- LBFGS

TrainResult train_lbfgs(nn::Network net, const Problem& problem, const LbfgsOptions& options,
                        const std::vector<int>& ladder, int epochs_per_stage) {
  const auto start = Clock::now();
  TrainResult r;
  TrainLog& log = r.log;
  log.settings = {{"optimizer", "lbfgs"},
                  {"lr", fmt::format("{}", options.lr)},
                  {"history", fmt::format("{}", options.history)},
                  {"line_search", "strong_wolfe"},
                  {"c1", fmt::format("{}", options.c1)},
                  {"c2", fmt::format("{}", options.c2)},
                  {"max_line_search", fmt::format("{}", options.max_line_search)},
                  {"epochs_per_stage", fmt::format("{}", epochs_per_stage)},
                  {"ladder", fmt::format("{}", fmt::join(ladder, ","))}};
  if (!ladder.empty() && net.spec.family != nn::Family::Kan) {
    throw ConfigError("grid refinement needs a KAN network");
  }
  const std::size_t stages = ladder.empty() ? 1 : ladder.size();
  int epoch = 0;
  double previous = kNaN;
  for (std::size_t s = 0; s < stages && !log.diverged; ++s) {
    if (!ladder.empty() && net.spec.grid.front() != ladder[s]) {
      Eigen::RowVectorXd before = nn::predict(net, problem.inputs);
      nn::refine(net, ladder[s], problem.inputs);
      Eigen::RowVectorXd after = nn::predict(net, problem.inputs);
      log.refine_change.push_back((after - before).cwiseAbs().maxCoeff());
      log.loss_before_refine.push_back(previous);
      log.loss_after_refine.push_back(evaluate_loss(net, problem));
    }
    log.stage_grid.push_back(net.spec.family == nn::Family::Kan ? net.spec.grid.front() : 0);
    log.stage_start.push_back(log.epoch.size());

    NetworkObjective obj(net, problem);
    const Objective f = obj.function();
    Eigen::VectorXd x = nn::flatten(net);
    Eigen::VectorXd grad(x.size());
    double loss = f(x, &grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      log.diverged = true;
      break;
    }
    Lbfgs opt(options);
    for (int e = 0; e < epochs_per_stage; ++e) {
      log.record(epoch++, loss, options.lr, static_cast<int>(s));
      if (!opt.step(f, x, loss, grad)) break;
    }
    nn::assign(net, x);
    previous = loss;
  }
  r.checkpoint = nn::Checkpoint{std::move(net), {}};
  r.checkpoint.meta.epochs = epoch;
  r.checkpoint.meta.final_loss = evaluate_loss(r.checkpoint.network, problem);
  log.wall_seconds = seconds_since(start);
  return r;
}

// ---------------------------------------------------------------- per family

nn::Network initial_network(const TrainConfig& config) {
  nn::NetworkSpec spec = nn::preset(config.arch_name(), config.target);
  if (spec.family == nn::Family::Kan) {
    std::fill(spec.grid.begin(), spec.grid.end(), config.ladder.front());
  }
  return nn::Network::initialize(spec, config.seed);
}

namespace {

void stamp(TrainResult& r, const TrainConfig& config) {
  r.checkpoint.meta.seed = config.seed;
  r.checkpoint.meta.target = std::string(device::field_name(config.target));
  r.log.settings.insert(r.log.settings.begin(),
                        {{"arch", config.arch_name()},
                         {"target", std::string(device::field_name(config.target))},
                         {"step_mv", fmt::format("{}", config.step_mv)},
                         {"seed", fmt::format("{}", config.seed)},
                         {"a", fmt::format("{}", config.a)}});
}

void require_family(const TrainConfig& config, nn::Family family) {
  config.validate();
  if (config.family != family) {
    throw ConfigError(fmt::format("config is for {}, not {}", nn::family_name(config.family),
                                  nn::family_name(family)));
  }
}

Problem problem_for(const TrainConfig& config, const device::VoltageGridDataset& ds) {
  return device_problem(grid_targets(ds, config.target), config.a);
}

}  // namespace

TrainResult train_mlp(const TrainConfig& config, const device::VoltageGridDataset& ds) {
  require_family(config, nn::Family::Mlp);
  AdamSchedule sc;
  sc.kind = AdamSchedule::Kind::Plateau;
  sc.adam.lr = config.initial_lr();
  sc.adam.weight_decay = config.weight_decay;
  sc.epochs = config.budget();
  sc.plateau_window = config.plateau_window;
  sc.plateau_threshold = config.plateau_threshold;
  sc.plateau_factor = config.plateau_factor;
  sc.lr_floor = config.lr_floor;
  TrainResult r = train_adam(initial_network(config), problem_for(config, ds), sc);
  stamp(r, config);
  return r;
}

TrainResult train_kan(const TrainConfig& config, const device::VoltageGridDataset& ds) {
  require_family(config, nn::Family::Kan);
  LbfgsOptions o;
  o.lr = config.initial_lr();
  o.history = config.lbfgs_history;
  const int per_stage = config.budget() / static_cast<int>(config.ladder.size());
  TrainResult r = train_lbfgs(initial_network(config), problem_for(config, ds), o, config.ladder, per_stage);
  stamp(r, config);
  return r;
}

TrainResult train_fkan(const TrainConfig& config, const device::VoltageGridDataset& ds) {
  require_family(config, nn::Family::Fkan);
  AdamSchedule sc;
  sc.kind = AdamSchedule::Kind::StepDecay;
  sc.adam.lr = config.initial_lr();
  sc.epochs = config.budget();
  sc.decay_factor = config.decay_factor;
  sc.decay_every = config.decay_every > 0 ? config.decay_every
                                          : std::max(1, config.budget() / kFkanDecaySteps);
  TrainResult r = train_adam(initial_network(config), problem_for(config, ds), sc);
  stamp(r, config);
  return r;
}

TrainResult train(const TrainConfig& config, const device::VoltageGridDataset& ds) {
  switch (config.family) {
    case nn::Family::Mlp: return train_mlp(config, ds);
    case nn::Family::Kan: return train_kan(config, ds);
    case nn::Family::Fkan: return train_fkan(config, ds);
  }
  throw ConfigError("unknown family");
}

// ---------------------------------------------------------------- sweeps

Quantiles quantiles(std::vector<double> values) {
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  if (values.empty()) throw DomainError("no finite values to summarize");
  std::sort(values.begin(), values.end());
  auto at = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {values.front(), at(0.25), at(0.5), at(0.75), values.back()};
}

SweepSummary seed_sweep(const TrainConfig& config, const device::VoltageGridDataset& ds, int n, int threads,
                        std::vector<std::optional<TrainResult>>* results) {
  if (n < 1) throw DomainError("seed sweep needs at least one seed");
  config.validate();
  SweepSummary out;
  out.runs.resize(static_cast<std::size_t>(n));
  if (results) results->assign(static_cast<std::size_t>(n), std::nullopt);
  auto run = [&](int i) {
    TrainConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(i);
    SeedResult& res = out.runs[static_cast<std::size_t>(i)];
    res.seed = c.seed;
    try {
      const TrainResult r = train(c, ds);
      res.diverged = r.log.diverged;
      res.final_loss = r.checkpoint.meta.final_loss;
      const eval::SplitMape m = eval::split_mape(r.checkpoint.network, ds, c.target);
      res.train_mape = m.train;
      res.test_mape = m.test;
      if (results) (*results)[static_cast<std::size_t>(i)] = r;
    } catch (const Error&) {
      res.diverged = true;
      res.final_loss = res.train_mape = res.test_mape = kNaN;
    }
  };
  const int workers = std::clamp(threads, 1, n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int i = w; i < n; i += workers) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  std::vector<double> tr, te;
  for (const auto& r : out.runs) {
    tr.push_back(r.train_mape);
    te.push_back(r.test_mape);
  }
  try {
    out.train = quantiles(tr);
  } catch (const DomainError&) {
    out.train = {kNaN, kNaN, kNaN, kNaN, kNaN};
  }
  try {
    out.test = quantiles(te);
  } catch (const DomainError&) {
    out.test = {kNaN, kNaN, kNaN, kNaN, kNaN};
  }
  return out;
}

std::string sweep_text(const SweepSummary& s) {
  std::string t = "seed,train_mape,test_mape,final_loss,diverged\n";
  for (const auto& r : s.runs) {
    t += fmt::format("{},{:.17g},{:.17g},{:.17g},{}\n", r.seed, r.train_mape, r.test_mape, r.final_loss,
                     r.diverged ? 1 : 0);
  }
  t += "stat,min,q1,median,q3,max\n";
  auto row = [](std::string_view name, const Quantiles& q) {
    return fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", name, q.min, q.q1, q.median, q.q3, q.max);
  };
  return t + row("train_mape", s.train) + row("test_mape", s.test);
}

}  // namespace kanc::train
