// End-to-end exercises of the command line binary: the simulate/fit/
// summarize/predict pipeline, config precedence, exit codes, and the
// benchmark subcommand. VERGE_BIN is injected by the build.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "verge/dataset.hpp"
#include "verge/posterior.hpp"
#include "verge/rng.hpp"
#include "verge/trace_io.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "verge_tests" / ("cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs `VERGE_BIN <args>` through the shell, capturing exit code and both
// streams. `env_prefix` lets a test inject environment assignments.
CmdResult run_cli(const std::string& args, const std::string& env_prefix = "") {
  static int counter = 0;
  const fs::path io = fs::temp_directory_path() / "verge_tests" / "cli_io";
  fs::create_directories(io);
  const fs::path out = io / ("out" + std::to_string(counter));
  const fs::path err = io / ("err" + std::to_string(counter));
  ++counter;

  std::string cmd = env_prefix;
  if (!cmd.empty()) cmd += " ";
  cmd += std::string("'") + VERGE_BIN + "' " + args + " >'" + out.string() + "' 2>'" +
         err.string() + "'";
  const int status = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// Small training table with one strong constant effect, x1 matters.
void write_signal_csv(const fs::path& path, int n, int P, int K, bool with_y,
                      std::uint64_t seed) {
  verge::Rng rng(seed);
  verge::RawData raw;
  raw.has_y = with_y;
  raw.X.resize(n, P);
  raw.Z.resize(n, K);
  if (with_y) raw.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < P; ++j) raw.X(i, j) = rng.normal();
    for (int k = 0; k < K; ++k) raw.Z(i, k) = rng.uniform(-1.0, 1.0);
    if (with_y) raw.y(i) = 3.0 * raw.X(i, 0) + rng.normal();
  }
  verge::write_csv(path.string(), raw);
}

// A trace whose single predictor is always included with a constant
// coefficient curve; paired with a matching 5-row training table.
void write_constant_trace(const fs::path& trace_path, const fs::path& train_path) {
  verge::Trace t;
  t.meta.n = 5;
  t.meta.P = 1;
  t.meta.K = 1;
  t.meta.total_iterations = 4;
  t.meta.thin = 1;
  for (int i = 0; i < 4; ++i) {
    verge::TraceRecord rec;
    rec.iteration = i + 1;
    rec.included = {0};
    verge::KernelParams p;
    p.gamma_tilde = {0};
    p.rho = verge::Vector::Ones(1);
    rec.params.push_back(p);
    rec.beta.push_back(verge::Vector::Constant(5, 2.0));
    t.records.push_back(rec);
  }
  verge::write_trace_jsonl(t, trace_path.string());

  verge::RawData raw;
  raw.has_y = true;
  raw.y.resize(5);
  raw.y << 1.0, 2.0, 3.0, 4.0, 5.0;
  raw.X.resize(5, 1);
  raw.X << -2.0, -1.0, 0.0, 1.0, 2.0;
  raw.Z.resize(5, 1);
  raw.Z << -1.0, -0.5, 0.0, 0.5, 1.0;
  verge::write_csv(train_path.string(), raw);
}

}  // namespace

TEST_CASE("simulate is seed-reproducible and validates its arguments") {
  const fs::path a = temp_dir("sim_a");
  const fs::path b = temp_dir("sim_b");
  const std::string flags = "simulate --P 20 --n 30 --n-test 5 --K 2 --seed 11 --out-dir ";
  REQUIRE(run_cli(flags + "'" + a.string() + "'").code == 0);
  REQUIRE(run_cli(flags + "'" + b.string() + "'").code == 0);

  CHECK(slurp(a / "train.csv") == slurp(b / "train.csv"));
  CHECK(slurp(a / "test.csv") == slurp(b / "test.csv"));
  CHECK(slurp(a / "truth.json") == slurp(b / "truth.json"));
  CHECK_FALSE(slurp(a / "train.csv").empty());

  std::ifstream tin(a / "truth.json");
  const json truth = json::parse(tin);
  int on = 0;
  for (int g : truth["true_gamma"]) on += g;
  CHECK(on == 2);
  CHECK(truth["true_edges"].size() == 16);
  CHECK(truth["beta_functions"][0] == "constant");
  CHECK(truth["covariate_of"][0].get<int>() >= 1);  // 1-based, 0 means none
  CHECK(truth["covariate_of"][1] == 0);

  const CmdResult bad = run_cli("simulate --P 61 --out-dir '" + a.string() + "'");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("multiple of 10") != std::string::npos);
}

TEST_CASE("fit, summarize, and predict chain together on simulated data") {
  const fs::path dir = temp_dir("pipeline");
  REQUIRE(run_cli("simulate --P 10 --n 40 --n-test 5 --K 2 --seed 3 --out-dir '" + dir.string() +
                  "'")
              .code == 0);

  const CmdResult fit =
      run_cli("fit --data '" + (dir / "train.csv").string() + "' --out-dir '" + dir.string() +
              "' --iters 300 --burn-in 100 --thin 2 --seed 4");
  REQUIRE(fit.code == 0);
  CHECK(fit.out.find("trace.jsonl") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "failure_state.json"));

  const verge::Trace trace = verge::read_trace_jsonl((dir / "trace.jsonl").string());
  CHECK(trace.meta.n == 40);
  CHECK(trace.meta.P == 10);
  CHECK(trace.meta.total_iterations == 300);
  CHECK(trace.records.size() == 100);

  std::ifstream min(dir / "move_stats.json");
  const json stats = json::parse(min);
  CHECK(stats["chains"].size() == 1);
  CHECK(stats["combined"]["add_proposed"].get<long>() > 0);

  const CmdResult summ = run_cli("summarize --trace '" + (dir / "trace.jsonl").string() +
                                 "' --out-dir '" + (dir / "summary").string() + "'");
  REQUIRE(summ.code == 0);
  CHECK(fs::exists(dir / "summary" / "report.json"));
  CHECK(fs::exists(dir / "summary" / "ppi.csv"));
  CHECK(fs::exists(dir / "summary" / "edges.csv"));
  CHECK(summ.out.find("selected predictors:") != std::string::npos);

  const CmdResult pred =
      run_cli("predict --trace '" + (dir / "trace.jsonl").string() + "' --train '" +
              (dir / "train.csv").string() + "' --test '" + (dir / "test.csv").string() +
              "' --out '" + (dir / "predictions.csv").string() + "'");
  REQUIRE(pred.code == 0);
  CHECK(pred.out.find("PMSE:") != std::string::npos);
  std::ifstream pin(dir / "predictions.csv");
  std::string header;
  std::getline(pin, header);
  CHECK(header == "y_hat,y");
  int rows = 0;
  for (std::string line; std::getline(pin, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == 5);
}

TEST_CASE("summarize writes flat coefficient curves for a constant trace") {
  const fs::path dir = temp_dir("summ_flat");
  write_constant_trace(dir / "trace.jsonl", dir / "train.csv");

  const CmdResult summ = run_cli("summarize --trace '" + (dir / "trace.jsonl").string() +
                                 "' --data '" + (dir / "train.csv").string() + "' --out-dir '" +
                                 dir.string() + "'");
  REQUIRE(summ.code == 0);
  CHECK(summ.out.find("selected predictors: x1") != std::string::npos);
  REQUIRE(fs::exists(dir / "coef_x1.csv"));

  std::ifstream cin(dir / "coef_x1.csv");
  std::string line;
  std::getline(cin, line);
  CHECK(line == "z1,beta_hat");
  double lo = 1e300, hi = -1e300;
  int rows = 0;
  while (std::getline(cin, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    REQUIRE(comma != std::string::npos);
    const double b = std::stod(line.substr(comma + 1));
    lo = std::min(lo, b);
    hi = std::max(hi, b);
    ++rows;
  }
  CHECK(rows == 5);
  CHECK(hi - lo < 0.1);  // the estimated curve of a constant coefficient is flat
  CHECK(hi == Catch::Approx(2.0).epsilon(1e-12));

  SECTION("an fdr target prints the derived cutoff") {
    const CmdResult fdr = run_cli("summarize --trace '" + (dir / "trace.jsonl").string() +
                                  "' --fdr 0.2 --out-dir '" + dir.string() + "'");
    REQUIRE(fdr.code == 0);
    CHECK(fdr.out.find("FDR target") != std::string::npos);
  }
}

TEST_CASE("config file keys override conflicting flags") {
  const fs::path dir = temp_dir("config");
  write_signal_csv(dir / "train.csv", 25, 3, 1, true, 21);
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "# iteration budget pinned here\n";
    cfg << "iters = 60\n";
    cfg << "burn_in = 20\n";
    cfg << "thin = 2\n";
  }

  const CmdResult fit = run_cli("fit --data '" + (dir / "train.csv").string() + "' --config '" +
                                (dir / "run.cfg").string() + "' --out-dir '" + dir.string() +
                                "' --iters 400 --burn-in 300");
  REQUIRE(fit.code == 0);
  const verge::Trace trace = verge::read_trace_jsonl((dir / "trace.jsonl").string());
  CHECK(trace.meta.total_iterations == 60);
  CHECK(trace.meta.burn_in == 20);
  CHECK(trace.records.size() == 20);

  SECTION("unknown keys are rejected") {
    std::ofstream cfg(dir / "bad.cfg");
    cfg << "iters = 60\nbananas = 3\n";
    cfg.close();
    const CmdResult bad = run_cli("fit --data '" + (dir / "train.csv").string() + "' --config '" +
                                  (dir / "bad.cfg").string() + "' --out-dir '" + dir.string() +
                                  "'");
    CHECK(bad.code == 2);
    CHECK(bad.err.find("bananas") != std::string::npos);
  }
}

TEST_CASE("multi-chain fits write per-chain traces and a correlation report") {
  const fs::path dir = temp_dir("chains");
  write_signal_csv(dir / "train.csv", 30, 4, 1, true, 22);

  const CmdResult fit = run_cli("fit --data '" + (dir / "train.csv").string() + "' --out-dir '" +
                                dir.string() + "' --iters 200 --burn-in 100 --thin 2 --chains 2");
  REQUIRE(fit.code == 0);
  CHECK(fs::exists(dir / "trace_chain1.jsonl"));
  CHECK(fs::exists(dir / "trace_chain2.jsonl"));
  CHECK_FALSE(fs::exists(dir / "trace.jsonl"));

  const verge::Trace t1 = verge::read_trace_jsonl((dir / "trace_chain1.jsonl").string());
  const verge::Trace t2 = verge::read_trace_jsonl((dir / "trace_chain2.jsonl").string());
  CHECK(t1.meta.chain == 1);
  CHECK(t2.meta.chain == 2);
  CHECK(t1.meta.seed != t2.meta.seed);  // chains advance the master seed

  REQUIRE(fs::exists(dir / "ppi_correlation.json"));
  std::ifstream cin(dir / "ppi_correlation.json");
  const json corr = json::parse(cin);
  REQUIRE(corr["pairs"].size() == 1);
  CHECK(corr["pairs"][0]["chain_a"] == 1);
  CHECK(corr["pairs"][0]["chain_b"] == 2);
  CHECK(corr.contains("min_predictor_ppi_pearson"));
}

TEST_CASE("exit codes distinguish the documented failure classes") {
  const fs::path dir = temp_dir("codes");

  SECTION("usage errors are 2") {
    CHECK(run_cli("").code == 2);                  // subcommand required
    CHECK(run_cli("frobnicate").code == 2);        // unknown subcommand
    CHECK(run_cli("fit --iters 10").code == 2);    // missing required --data
    CHECK(run_cli("fit --data missing.csv --iters 0").code == 2);  // validation
  }

  SECTION("a recordless trace exits 4") {
    verge::Trace t;
    t.meta.n = 5;
    t.meta.P = 1;
    t.meta.K = 1;
    verge::write_trace_jsonl(t, (dir / "empty.jsonl").string());
    const CmdResult r = run_cli("summarize --trace '" + (dir / "empty.jsonl").string() +
                                "' --out-dir '" + dir.string() + "'");
    CHECK(r.code == 4);
    CHECK(r.err.find("empty trace") != std::string::npos);
  }

  SECTION("an unspannable selection exits 5") {
    // Three predictors with PPI 2/3 each, but no record includes all three.
    verge::Trace t;
    t.meta.n = 4;
    t.meta.P = 3;
    t.meta.K = 1;
    auto rec = [&](std::initializer_list<int> inc) {
      verge::TraceRecord r;
      r.included = inc;
      for (std::size_t i = 0; i < r.included.size(); ++i) {
        verge::KernelParams p;
        p.gamma_tilde = {0};
        p.rho = verge::Vector::Ones(1);
        r.params.push_back(p);
        r.beta.push_back(verge::Vector::Constant(4, 1.0));
      }
      t.records.push_back(r);
    };
    rec({0, 1});
    rec({0, 1});
    rec({0, 2});
    rec({0, 2});
    rec({1, 2});
    rec({1, 2});
    verge::write_trace_jsonl(t, (dir / "disjoint.jsonl").string());

    verge::RawData raw;
    raw.has_y = true;
    raw.y.resize(4);
    raw.y << 1.0, -1.0, 2.0, -2.0;
    raw.X.resize(4, 3);
    raw.X << 1, 0.5, -1, -1, 1.5, 1, 2, -0.5, -2, -2, -1.5, 2;
    raw.Z.resize(4, 1);
    raw.Z << -1.0, -0.25, 0.25, 1.0;
    verge::write_csv((dir / "train3.csv").string(), raw);
    raw.has_y = false;
    verge::write_csv((dir / "test3.csv").string(), raw);

    const CmdResult r = run_cli("predict --trace '" + (dir / "disjoint.jsonl").string() +
                                "' --train '" + (dir / "train3.csv").string() + "' --test '" +
                                (dir / "test3.csv").string() + "' --out '" +
                                (dir / "p.csv").string() + "'");
    CHECK(r.code == 5);
    CHECK(r.err.find("prediction undefined") != std::string::npos);
  }

  SECTION("a numerical fault exits 3 and leaves a state dump") {
    // A response on the 1e200 scale overflows the residual sum of squares,
    // driving the noise variance non-finite within a few iterations.
    verge::Rng rng(31);
    verge::RawData raw;
    raw.has_y = true;
    raw.y.resize(20);
    raw.X.resize(20, 2);
    raw.Z.resize(20, 1);
    for (int i = 0; i < 20; ++i) {
      raw.y(i) = (i % 2 == 0 ? 1.0 : -1.0) * 1e200;
      raw.X(i, 0) = rng.normal();
      raw.X(i, 1) = rng.normal();
      raw.Z(i, 0) = rng.uniform(-1.0, 1.0);
    }
    verge::write_csv((dir / "huge.csv").string(), raw);

    const CmdResult r = run_cli("fit --data '" + (dir / "huge.csv").string() + "' --out-dir '" +
                                (dir / "huge_out").string() + "' --iters 50 --burn-in 10");
    CHECK(r.code == 3);
    CHECK(r.err.find("numerical error") != std::string::npos);
    CHECK(fs::exists(dir / "huge_out" / "failure_state.json"));
  }

  SECTION("an invalid worker count from the environment is 2") {
    write_signal_csv(dir / "w.csv", 20, 2, 1, true, 23);
    const CmdResult r = run_cli("fit --data '" + (dir / "w.csv").string() + "' --out-dir '" +
                                    dir.string() + "' --iters 20 --burn-in 5",
                                "VERGE_WORKERS=abc");
    CHECK(r.code == 2);
    CHECK(r.err.find("VERGE_WORKERS") != std::string::npos);
  }
}

TEST_CASE("predict without a y column omits the truth column") {
  const fs::path dir = temp_dir("pred_noy");
  write_constant_trace(dir / "trace.jsonl", dir / "train.csv");
  verge::RawData test;
  test.has_y = false;
  test.X.resize(3, 1);
  test.X << -1.0, 0.0, 1.0;
  test.Z.resize(3, 1);
  test.Z << -0.5, 0.0, 0.5;
  verge::write_csv((dir / "test.csv").string(), test);

  const CmdResult r = run_cli("predict --trace '" + (dir / "trace.jsonl").string() +
                              "' --train '" + (dir / "train.csv").string() + "' --test '" +
                              (dir / "test.csv").string() + "' --out '" +
                              (dir / "out.csv").string() + "'");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("PMSE") == std::string::npos);
  std::ifstream in(dir / "out.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "y_hat");
}

TEST_CASE("benchmark honors the desk-scale preset and scenario names") {
  const fs::path dir = temp_dir("bench");
  const CmdResult r = run_cli(
      "benchmark --scenario base --desk-scale --replicates 1 --n 25 --n-test 5 --K 2 "
      "--iters 60 --burn-in 20 --thin 2 --seed 5 --out-dir '" +
      dir.string() + "'");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("metric") != std::string::npos);
  CHECK(r.out.find("replicates: 1 attempted, 1 completed") != std::string::npos);
  REQUIRE(fs::exists(dir / "campaign.csv"));

  std::ifstream in(dir / "campaign.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "metric,mean,sd,defined");
  int rows = 0;
  bool sd_zero = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    // metric,mean,sd,defined; a single replicate cannot have spread
    std::stringstream ss(line);
    std::string name, mean, sd, defined;
    std::getline(ss, name, ',');
    std::getline(ss, mean, ',');
    std::getline(ss, sd, ',');
    std::getline(ss, defined, ',');
    if (!sd.empty() && std::stod(sd) != 0.0) sd_zero = false;
  }
  CHECK(rows == 14);
  CHECK(sd_zero);

  const CmdResult bogus = run_cli("benchmark --scenario exotic --out-dir '" + dir.string() + "'");
  CHECK(bogus.code == 2);
  CHECK(bogus.err.find("unknown scenario") != std::string::npos);
}
