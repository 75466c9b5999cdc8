#include "kanc/cli/app.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "kanc/cli/manifest.hpp"
#include "kanc/error.hpp"
#include "kanc/eval/metrics.hpp"
#include "kanc/eval/report.hpp"
#include "kanc/symbolic/regression.hpp"
#include "kanc/train/trainer.hpp"
#include "kanc/version.hpp"

namespace kanc::cli {

namespace fs = std::filesystem;

namespace {

// Thrown by a command that produced partial artifacts before diverging.
struct Diverged {
  std::string what;
};

void put_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(fmt::format("cannot write {}", path.string()));
  os << text;
  if (!os) throw IoError(fmt::format("write failed for {}", path.string()));
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError(fmt::format("cannot create directory {}", dir.string()));
}

std::vector<std::pair<std::string, std::string>> key_values(const std::string& ini) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream is(ini);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return kv;
}

std::string rel(const fs::path& p) { return p.generic_string(); }

// Dataset from --data (hashed into the manifest) or generated at --step.
struct DataSource {
  std::string path;
  int step_mv = 10;

  void add_options(CLI::App* app) {
    app->add_option("--data", path, "dataset file written by gen-data")->check(CLI::ExistingFile);
    app->add_option("--step", step_mv, "generate the surrogate dataset at this step (mV)")
        ->check(CLI::IsMember({5, 10, 20, 50}));
  }

  device::VoltageGridDataset load(RunManifest& m) const {
    if (path.empty()) {
      m.config.emplace_back("step", std::to_string(step_mv));
      return device::generate_dataset(step_mv);
    }
    m.add_input(path);
    device::VoltageGridDataset ds = device::read_dataset(path);
    m.config.emplace_back("step", std::to_string(ds.step_mv));
    return ds;
  }
};

RunManifest manifest(const std::string& command) {
  RunManifest m;
  m.command = command;
  m.version = std::string(kVersion);
  return m;
}

// ---------------------------------------------------------------- gen-data

struct GenData {
  int step_mv = 10;
  std::string out;

  void attach(CLI::App& app) {
    CLI::App* c = app.add_subcommand("gen-data", "write the surrogate dataset for one grid step");
    c->add_option("--step", step_mv, "train grid step in mV (5, 10, 20, 50)")
        ->required()
        ->check(CLI::IsMember({5, 10, 20, 50}));
    c->add_option("--out", out, "dataset file")->required();
  }

  void run(std::ostream& os) const {
    const device::VoltageGridDataset ds = device::generate_dataset(step_mv);
    device::write_dataset(ds, out);
    RunManifest m = manifest("gen-data");
    m.config.emplace_back("step", std::to_string(step_mv));
    m.outputs.push_back(rel(out));
    m.write(out + ".manifest.json");
    os << fmt::format("wrote {} ({} train, {} test points)\n", out, ds.train.size(), ds.test.size());
  }
};

// ---------------------------------------------------------------- train

struct Train {
  std::string config_path;
  std::string out;
  std::string data;
  int sweep = 1;
  int threads = 1;
  // flag -> config key, value
  std::vector<std::pair<std::string, std::string>> flags{
      {"family", ""}, {"arch", ""}, {"target", ""}, {"step", ""}, {"seed", ""},
      {"a", ""}, {"epochs", ""}, {"full_budget", ""}, {"lr", ""}, {"ladder", ""},
      {"weight_decay", ""}, {"plateau_window", ""}, {"plateau_threshold", ""},
      {"plateau_factor", ""}, {"lr_floor", ""}, {"decay_factor", ""}, {"decay_every", ""},
      {"lbfgs_history", ""}};

  void attach(CLI::App& app) {
    CLI::App* c = app.add_subcommand("train", "train one network, or a seed sweep");
    c->add_option("--config", config_path, "key-value config file")->check(CLI::ExistingFile);
    c->add_option("--out", out, "output directory")->required();
    c->add_option("--data", data, "dataset file (default: generate at the config step)")->check(CLI::ExistingFile);
    c->add_option("--sweep", sweep, "number of seeds, starting at the config seed")->check(CLI::PositiveNumber);
    c->add_option("--threads", threads, "parallel runs in a sweep")->check(CLI::PositiveNumber);
    for (auto& [key, value] : flags) {
      std::string flag = "--" + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      c->add_option(flag, value, fmt::format("overrides config key '{}'", key))
          ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
  }

  train::TrainConfig resolve() const {
    namespace pt = boost::property_tree;
    pt::ptree root;
    if (!config_path.empty()) {
      try {
        pt::read_ini(config_path, root);
      } catch (const pt::ini_parser_error& e) {
        throw ConfigError(fmt::format("bad config: {}", e.what()));
      }
    }
    pt::ptree section = root.get_child_optional("train") ? root.get_child("train") : root;
    for (const auto& [key, value] : flags) {
      if (!value.empty()) section.put(key, value);
    }
    pt::ptree merged;
    for (const auto& [key, node] : section) {
      if (node.empty()) merged.put(key, node.data());
    }
    std::ostringstream os;
    pt::write_ini(os, merged);
    return train::parse_config(os.str());
  }

  void write_run(const train::TrainResult& r, const fs::path& dir, RunManifest& m) const {
    make_dir(dir);
    nn::write_checkpoint(r.checkpoint, dir / "checkpoint.json");
    train::write_log(r.log, dir / "train_log.csv");
    m.outputs.push_back(rel(dir / "checkpoint.json"));
    m.outputs.push_back(rel(dir / "train_log.csv"));
  }

  void run(std::ostream& os) const {
    train::TrainConfig config = resolve();
    RunManifest m = manifest("train");
    device::VoltageGridDataset ds;
    if (!config_path.empty()) m.add_input(config_path);
    if (data.empty()) {
      ds = device::generate_dataset(config.step_mv);
    } else {
      m.add_input(data);
      ds = device::read_dataset(data);
      config.step_mv = ds.step_mv;
    }
    m.config = key_values(train::config_text(config));
    m.config.emplace_back("sweep", std::to_string(sweep));
    m.seed = config.seed;
    const fs::path dir(out);
    make_dir(dir);
    put_text(dir / "config.ini", train::config_text(config));
    m.outputs.push_back(rel(dir / "config.ini"));

    bool diverged = false;
    if (sweep == 1) {
      const train::TrainResult r = train::train(config, ds);
      write_run(r, dir, m);
      diverged = r.log.diverged;
      const eval::SplitMape mape = eval::split_mape(r.checkpoint.network, ds, config.target);
      os << fmt::format("{} {} seed {}: loss {:.6g}, train MAPE {:.4g}%, test MAPE {:.4g}%\n", config.arch_name(),
                        device::field_name(config.target), config.seed, r.checkpoint.meta.final_loss,
                        100.0 * mape.train, 100.0 * mape.test);
    } else {
      std::vector<std::optional<train::TrainResult>> results;
      const train::SweepSummary s = train::seed_sweep(config, ds, sweep, threads, &results);
      for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i]) write_run(*results[i], dir / fmt::format("seed_{}", s.runs[i].seed), m);
        diverged = diverged || s.runs[i].diverged;
      }
      put_text(dir / "sweep_summary.csv", train::sweep_text(s));
      m.outputs.push_back(rel(dir / "sweep_summary.csv"));
      os << fmt::format("{} seeds: median train MAPE {:.4g}%, median test MAPE {:.4g}%\n", sweep,
                        100.0 * s.train.median, 100.0 * s.test.median);
    }
    m.write(dir / "manifest.json");
    if (diverged) throw Diverged{"training diverged; last finite parameters were written"};
  }
};

// ---------------------------------------------------------------- eval

struct Eval {
  std::string checkpoint;
  std::string out;
  DataSource source;

  void attach(CLI::App& app) {
    CLI::App* c = app.add_subcommand("eval", "train and test MAPE of a checkpoint");
    c->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "output directory")->required();
    source.add_options(c);
  }

  void run(std::ostream& os) const {
    RunManifest m = manifest("eval");
    m.add_input(checkpoint);
    const nn::Checkpoint ckpt = nn::read_checkpoint(checkpoint);
    m.seed = ckpt.meta.seed;
    const device::VoltageGridDataset ds = source.load(m);
    eval::EvalReport report;
    report.rows.push_back(eval::evaluate_checkpoint(ckpt, ds));
    const fs::path dir(out);
    make_dir(dir);
    put_text(dir / "summary.csv", eval::summary_text(report));
    m.outputs.push_back(rel(dir / "summary.csv"));
    m.write(dir / "manifest.json");
    const eval::ReportRow& r = report.rows.front();
    os << fmt::format("{}: train MAPE {:.4g}%, test MAPE {:.4g}%\n", r.target, 100.0 * r.train_mape,
                      100.0 * r.test_mape);
  }
};

// ---------------------------------------------------------------- derivs

struct Derivs {
  std::string checkpoint;
  std::string out;
  std::vector<double> vd{eval::kSweepDrainLow, eval::kSweepDrainHigh};
  int resolution_mv = 1;

  void attach(CLI::App& app) {
    CLI::App* c = app.add_subcommand("derivs", "g_m and g_m' sweeps of a drain-current checkpoint");
    c->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "output directory")->required();
    c->add_option("--vd", vd, "fixed drain voltages (V)")->check(CLI::Range(0.0, 0.82));
    c->add_option("--resolution", resolution_mv, "V_G axis step in mV")->check(CLI::PositiveNumber);
  }

  void run(std::ostream& os) const {
    RunManifest m = manifest("derivs");
    m.add_input(checkpoint);
    const nn::Checkpoint ckpt = nn::read_checkpoint(checkpoint);
    m.seed = ckpt.meta.seed;
    m.config.emplace_back("vd", fmt::format("{}", fmt::join(vd, ",")));
    m.config.emplace_back("resolution_mv", std::to_string(resolution_mv));
    const fs::path dir(out);
    make_dir(dir);
    std::string summary = "V_D,waviness_g_m2\n";
    for (double v : vd) {
      const eval::DerivativeCurves c = eval::derivative_sweep(ckpt.network, v, resolution_mv);
      const fs::path p = dir / fmt::format("curve_vd{:.2f}.csv", v);
      put_text(p, eval::curve_text(c));
      m.outputs.push_back(rel(p));
      const double w = eval::waviness(c.gm2);
      summary += fmt::format("{},{:.17g}\n", v, w);
      os << fmt::format("V_D={} V: waviness {:.6g}\n", v, w);
    }
    put_text(dir / "waviness.csv", summary);
    m.outputs.push_back(rel(dir / "waviness.csv"));
    m.write(dir / "manifest.json");
  }
};

// ---------------------------------------------------------------- symbolic

struct Symbolic {
  std::string checkpoint;
  std::string out;
  std::string mode;
  std::string k = "3";
  int retrain_epochs = -1;
  double retrain_fraction = symbolic::kRetrainFraction;
  int samples = symbolic::kDefaultFitSamples;
  DataSource source;

  void attach(CLI::App& app) {
    CLI::App* c = app.add_subcommand("symbolic", "fix every KAN edge to a basic function and extract a formula");
    c->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "output directory")->required();
    c->add_option("--mode", mode, "posthoc or iterative")->required()->check(CLI::IsMember({"posthoc", "iterative"}));
    c->add_option("--k", k, "edges fixed per round, or 'all'");
    c->add_option("--retrain-epochs", retrain_epochs, "LBFGS epochs per round (default: fraction of 1500)");
    c->add_option("--retrain-fraction", retrain_fraction)->check(CLI::Range(0.0, 1.0));
    c->add_option("--samples", samples, "samples per edge fit (0: all)")->check(CLI::NonNegativeNumber);
    source.add_options(c);
  }

  void run(std::ostream& os) const {
    RunManifest m = manifest("symbolic");
    m.add_input(checkpoint);
    const nn::Checkpoint ckpt = nn::read_checkpoint(checkpoint);
    m.seed = ckpt.meta.seed;
    const device::VoltageGridDataset ds = source.load(m);
    symbolic::SrConfig config;
    config.max_samples = samples;
    config.retrain_fraction = retrain_fraction;
    config.retrain_epochs = retrain_epochs;
    if (k == "all") {
      config.k = 0;
    } else {
      try {
        config.k = std::stoi(k);
      } catch (const std::exception&) {
        throw ConfigError(fmt::format("--k must be a positive integer or 'all', got '{}'", k));
      }
      if (config.k < 1) throw ConfigError(fmt::format("--k must be a positive integer or 'all', got '{}'", k));
    }
    if (mode == "posthoc") {
      config.k = 0;
      config.retrain_epochs = 0;
    }
    m.config.emplace_back("mode", mode);
    m.config.emplace_back("k", config.k == 0 ? "all" : std::to_string(config.k));
    m.config.emplace_back("epochs_per_round", std::to_string(config.epochs_per_round()));
    m.config.emplace_back("samples", std::to_string(config.max_samples));
    const symbolic::SrResult r = symbolic::iterative_sr(ckpt, ds, config);

    const fs::path dir(out);
    make_dir(dir);
    put_text(dir / "sr_log.csv", symbolic::sr_log_text(r, config));
    nn::write_checkpoint(r.checkpoint, dir / "checkpoint.json");
    m.outputs.push_back(rel(dir / "sr_log.csv"));
    m.outputs.push_back(rel(dir / "checkpoint.json"));
    if (r.formula) {
      put_text(dir / "formula.txt", r.formula->text() + "\n");
      put_text(dir / "formula.json", r.formula->json().dump(2) + "\n");
      m.outputs.push_back(rel(dir / "formula.txt"));
      m.outputs.push_back(rel(dir / "formula.json"));
    }
    m.write(dir / "manifest.json");
    for (const symbolic::SrRound& round : r.rounds) {
      os << fmt::format("round {}: fixed {} edges, train MAPE {:.4g}%\n", round.round, round.fixed.size(),
                        100.0 * round.train_mape);
    }
    if (r.diverged) throw Diverged{"retraining diverged; the partial log was written"};
    os << r.formula->text() << "\n";
  }
};

// ---------------------------------------------------------------- report

struct Report {
  std::vector<std::string> checkpoints;
  std::string out;
  DataSource source;

  void attach(CLI::App& app) {
    CLI::App* c = app.add_subcommand("report", "summary table, seed statistics and derivative curves");
    c->add_option("--checkpoint", checkpoints, "checkpoint files")->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "output directory")->required();
    source.add_options(c);
  }

  void run(std::ostream& os) const {
    RunManifest m = manifest("report");
    std::vector<nn::Checkpoint> ckpts;
    for (const std::string& p : checkpoints) {
      m.add_input(p);
      ckpts.push_back(nn::read_checkpoint(p));
    }
    const device::VoltageGridDataset ds = source.load(m);
    const eval::EvalReport report = eval::make_report(ckpts, ds);
    for (const fs::path& p : eval::write_report(report, out)) m.outputs.push_back(rel(p));
    m.write(fs::path(out) / "manifest.json");
    os << eval::summary_text(report);
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"KAN, Fourier-KAN and MLP compact models of a transistor surrogate", "kanc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  GenData gen;
  Train tr;
  Eval ev;
  Derivs dv;
  Symbolic sy;
  Report rp;
  gen.attach(app);
  tr.attach(app);
  ev.attach(app);
  dv.attach(app);
  sy.attach(app);
  rp.attach(app);

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  try {
    if (app.got_subcommand("gen-data")) gen.run(out);
    else if (app.got_subcommand("train")) tr.run(out);
    else if (app.got_subcommand("eval")) ev.run(out);
    else if (app.got_subcommand("derivs")) dv.run(out);
    else if (app.got_subcommand("symbolic")) sy.run(out);
    else if (app.got_subcommand("report")) rp.run(out);
  } catch (const Diverged& d) {
    err << "diverged: " << d.what << "\n";
    return kExitDiverged;
  } catch (const EvaluationError& e) {
    err << "diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace kanc::cli
