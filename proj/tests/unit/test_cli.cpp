#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "kanc/cli/app.hpp"
#include "kanc/cli/manifest.hpp"
#include "kanc/nn/checkpoint.hpp"
#include "fixtures.hpp"

using namespace kanc;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = 0;
  std::string out;
  std::string err;
};

Run kanc_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "kanc");
  std::ostringstream out, err;
  const int status = cli::run(args, out, err);
  return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream s;
  s << is.rdbuf();
  return s.str();
}

long count(const std::string& text, const std::string& needle) {
  long n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

// Data rows of a train log, after the "# " settings and the header.
long log_rows(const fs::path& p) {
  std::istringstream is(slurp(p));
  std::string line;
  long n = -1;
  while (std::getline(is, line)) {
    if (!line.starts_with("#")) ++n;
  }
  return n;
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "kanc_cli_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("sha256") {
  CHECK(cli::sha256_text("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(cli::sha256_text("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("gen-data") {
  TempDir tmp;
  SUBCASE("table sizes") {
    for (auto [step, train] : {std::pair{50, 289L}, std::pair{5, 27225L}}) {
      const std::string file = tmp / ("d" + std::to_string(step) + ".csv");
      REQUIRE(kanc_cli({"gen-data", "--step", std::to_string(step), "--out", file}).status == cli::kExitOk);
      CHECK(count(slurp(file), ",train\n") == train);
      CHECK(fs::exists(file + ".manifest.json"));
    }
  }
  SUBCASE("unsupported step") {
    const Run r = kanc_cli({"gen-data", "--step", "7", "--out", tmp / "d.csv"});
    CHECK(r.status == cli::kExitUsage);
    CHECK(r.err.find("Usage") != std::string::npos);
  }
  SUBCASE("unwritable path") {
    const Run r = kanc_cli({"gen-data", "--step", "50", "--out", tmp / "missing/dir/d.csv"});
    CHECK(r.status != cli::kExitOk);
    CHECK(!r.err.empty());
  }
  SUBCASE("missing subcommand") { CHECK(kanc_cli({}).status == cli::kExitUsage); }
}

TEST_CASE("train") {
  TempDir tmp;
  const std::vector<std::string> base{"train", "--arch", "MLP1", "--target", "Q_S", "--seed", "0",
                                      "--epochs", "100", "--step", "50"};
  auto with_out = [&](const std::string& dir) {
    auto a = base;
    a.insert(a.end(), {"--out", dir});
    return a;
  };
  SUBCASE("single run artifacts") {
    REQUIRE(kanc_cli(with_out(tmp / "r1")).status == cli::kExitOk);
    CHECK(fs::exists(tmp / "r1/checkpoint.json"));
    CHECK(log_rows(tmp / "r1/train_log.csv") == 100);
    const std::string m = slurp(tmp / "r1/manifest.json");
    CHECK(m.find("\"command\": \"train\"") != std::string::npos);
    CHECK(m.find("\"epochs\": \"100\"") != std::string::npos);
  }
  SUBCASE("reruns are byte-identical") {
    REQUIRE(kanc_cli(with_out(tmp / "r1")).status == cli::kExitOk);
    REQUIRE(kanc_cli(with_out(tmp / "r2")).status == cli::kExitOk);
    CHECK(slurp(tmp / "r1/checkpoint.json") == slurp(tmp / "r2/checkpoint.json"));
    CHECK(slurp(tmp / "r1/train_log.csv").substr(0, 200) == slurp(tmp / "r2/train_log.csv").substr(0, 200));
  }
  SUBCASE("config file with flag overrides") {
    std::ofstream(tmp / "c.ini") << "[train]\narch=MLP1\ntarget=Q_D\nstep=50\nepochs=40\nseed=2\n";
    REQUIRE(kanc_cli({"train", "--config", tmp / "c.ini", "--epochs", "7", "--out", tmp / "r3"}).status == 0);
    CHECK(log_rows(tmp / "r3/train_log.csv") == 7);
    const nn::Checkpoint c = nn::read_checkpoint(tmp / "r3/checkpoint.json");
    CHECK(c.meta.target == "Q_D");
    CHECK(c.meta.seed == 2);
    CHECK(slurp(tmp / "r3/manifest.json").find("\"sha256\"") != std::string::npos);
  }
  SUBCASE("seed sweep") {
    auto a = with_out(tmp / "sweep");
    a.insert(a.end(), {"--sweep", "4", "--threads", "2", "--epochs", "10"});
    REQUIRE(kanc_cli(a).status == cli::kExitOk);
    for (int s = 0; s < 4; ++s) CHECK(fs::exists(tmp / ("sweep/seed_" + std::to_string(s) + "/checkpoint.json")));
    CHECK(fs::exists(tmp / "sweep/sweep_summary.csv"));
  }
  SUBCASE("bad config") {
    std::ofstream(tmp / "bad.ini") << "arch=MLP1\nbogus=3\n";
    CHECK(kanc_cli({"train", "--config", tmp / "bad.ini", "--out", tmp / "r4"}).status == cli::kExitUsage);
    CHECK(kanc_cli({"train", "--arch", "MLP7", "--out", tmp / "r5"}).status == cli::kExitUsage);
  }
  SUBCASE("divergence") {
    const Run r = kanc_cli({"train", "--arch", "MLP1", "--target", "I_D", "--step", "50", "--epochs", "50",
                            "--lr", "1e6", "--out", tmp / "div"});
    CHECK(r.status == cli::kExitDiverged);
    CHECK(fs::exists(tmp / "div/checkpoint.json"));
  }
}

TEST_CASE("eval, derivs, symbolic, report") {
  TempDir tmp;
  nn::write_checkpoint(testing::source_charge_oracle(), tmp / "oracle.json");
  SUBCASE("eval of the closed-form model") {
    REQUIRE(kanc_cli({"eval", "--checkpoint", tmp / "oracle.json", "--step", "20", "--out", tmp / "ev"}).status == 0);
    std::istringstream rows(slurp(tmp / "ev/summary.csv"));
    std::string line;
    while (std::getline(rows, line) && !line.starts_with("Q_S,")) {}
    REQUIRE(line.starts_with("Q_S,20,0,"));
    std::istringstream cells(line.substr(9));
    double train = 1.0, test = 1.0;
    char comma = 0;
    cells >> train >> comma >> test;
    CHECK(train < 1e-12);
    CHECK(test < 1e-12);
    CHECK(line.ends_with(",nan,nan"));
  }
  SUBCASE("derivs default drain voltages") {
    nn::Checkpoint c{nn::Network::initialize(nn::preset("MLP1", device::Field::DrainCurrent), 0), {}};
    nn::write_checkpoint(c, tmp / "id.json");
    REQUIRE(kanc_cli({"derivs", "--checkpoint", tmp / "id.json", "--out", tmp / "dv"}).status == 0);
    CHECK(fs::exists(tmp / "dv/curve_vd0.40.csv"));
    CHECK(fs::exists(tmp / "dv/curve_vd0.80.csv"));
    CHECK(kanc_cli({"derivs", "--checkpoint", tmp / "oracle.json", "--out", tmp / "dq"}).status == cli::kExitUsage);
  }
  SUBCASE("iterative symbolic regression on 18 edges") {
    nn::Checkpoint c{nn::Network::initialize(nn::kan_spec({2, 6, 1}, 4, nn::Conversion::ChargeScale), 0), {}};
    c.meta.target = "Q_S";
    nn::write_checkpoint(c, tmp / "kan.json");
    const Run r = kanc_cli({"symbolic", "--checkpoint", tmp / "kan.json", "--mode", "iterative", "--k", "3",
                            "--retrain-epochs", "2", "--step", "50", "--out", tmp / "sr"});
    REQUIRE(r.status == cli::kExitOk);
    CHECK(slurp(tmp / "sr/sr_log.csv").find("# rounds=6\n") != std::string::npos);
    CHECK(slurp(tmp / "sr/formula.txt").starts_with("Q_S = "));
    CHECK(fs::exists(tmp / "sr/formula.json"));
    CHECK(kanc_cli({"symbolic", "--checkpoint", tmp / "kan.json", "--mode", "iterative", "--k", "0", "--step",
                    "50", "--out", tmp / "sr2"})
              .status == cli::kExitUsage);
    CHECK(kanc_cli({"symbolic", "--checkpoint", tmp / "kan.json", "--mode", "greedy", "--out", tmp / "sr3"})
              .status == cli::kExitUsage);
  }
  SUBCASE("report") {
    REQUIRE(kanc_cli({"report", "--checkpoint", tmp / "oracle.json", "--step", "50", "--out", tmp / "rp"}).status ==
            0);
    CHECK(fs::exists(tmp / "rp/summary.csv"));
    CHECK(fs::exists(tmp / "rp/manifest.json"));
  }
  SUBCASE("missing files") {
    CHECK(kanc_cli({"eval", "--checkpoint", tmp / "nope.json", "--out", tmp / "x"}).status == cli::kExitUsage);
    CHECK(kanc_cli({"report", "--checkpoint", tmp / "nope.json", "--out", tmp / "x"}).status == cli::kExitUsage);
  }
}
