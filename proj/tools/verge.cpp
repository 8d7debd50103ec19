// verge: varying effects regression with graph estimation.
//
// Subcommands: simulate, fit, summarize, predict, benchmark. Exit codes:
// 0 success, 2 usage or validation error, 3 numerical fault (a state dump is
// written next to the trace), 4 empty trace, 5 prediction undefined.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "verge/config.hpp"
#include "verge/dataset.hpp"
#include "verge/posterior.hpp"
#include "verge/sampler.hpp"
#include "verge/simulation.hpp"
#include "verge/trace_io.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int env_workers() {
  const char* raw = std::getenv("VERGE_WORKERS");
  if (!raw || !*raw) return 1;
  try {
    const int w = std::stoi(raw);
    if (w < 1) throw std::invalid_argument("non-positive");
    return w;
  } catch (const std::exception&) {
    throw verge::ValidationError("VERGE_WORKERS must be a positive integer, got '" +
                                 std::string(raw) + "'");
  }
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw verge::ValidationError("cannot create directory " + dir + ": " + ec.message());
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

json stats_to_json(const verge::MoveStats& s) {
  return json{{"add_proposed", s.add_proposed},       {"add_accepted", s.add_accepted},
              {"add_rate", s.add_rate()},             {"delete_proposed", s.delete_proposed},
              {"delete_accepted", s.delete_accepted}, {"delete_rate", s.delete_rate()},
              {"keep_proposed", s.keep_proposed},     {"keep_accepted", s.keep_accepted},
              {"keep_rate", s.keep_rate()},           {"flip_proposed", s.flip_proposed},
              {"flip_accepted", s.flip_accepted},     {"flip_rate", s.flip_rate()},
              {"rho_proposed", s.rho_proposed},       {"rho_accepted", s.rho_accepted},
              {"rho_rate", s.rho_rate()},             {"scale_proposed", s.scale_proposed},
              {"scale_accepted", s.scale_accepted},   {"scale_rate", s.scale_rate()}};
}

verge::Dataset load_training_data(const std::string& path) {
  verge::RawData raw = verge::read_csv(path);
  if (!raw.has_y) throw verge::ValidationError(path + ": training data needs a y column");
  return verge::standardize(raw.y, raw.X, raw.Z);
}

// --- simulate ----------------------------------------------------------------

struct SimulateArgs {
  int P = 60, n = 200, n_test = 50, K = 3;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

int cmd_simulate(const SimulateArgs& a) {
  const verge::SimulatedData sim = verge::gen_dataset(a.P, a.n, a.n_test, a.K, a.seed);
  ensure_dir(a.out_dir);
  verge::write_csv(a.out_dir + "/train.csv", sim.raw_train);
  verge::write_csv(a.out_dir + "/test.csv", sim.raw_test);

  json truth;
  truth["P"] = a.P;
  truth["K"] = a.K;
  truth["n"] = a.n;
  truth["n_test"] = a.n_test;
  truth["seed"] = a.seed;
  truth["tau2_true"] = sim.truth.tau2_true;
  std::vector<int> tg(sim.truth.true_gamma.data(),
                      sim.truth.true_gamma.data() + sim.truth.true_gamma.size());
  truth["true_gamma"] = tg;
  // 1-based to match the x1../z1.. column names; 0 marks "no covariate".
  std::vector<int> cov;
  for (int c : sim.truth.covariate_of) cov.push_back(c < 0 ? 0 : c + 1);
  truth["covariate_of"] = cov;
  std::vector<std::string> fns;
  for (auto tag : sim.truth.beta_fn) fns.emplace_back(verge::beta_function_name(tag));
  truth["beta_functions"] = fns;
  json edges = json::array();
  for (const auto& e : sim.truth.true_edges)
    edges.push_back({e.first + 1, e.second + 1});
  truth["true_edges"] = edges;
  std::ofstream out(a.out_dir + "/truth.json");
  if (!out) throw verge::ValidationError("cannot write " + a.out_dir + "/truth.json");
  out << truth.dump(2) << "\n";

  std::cout << "wrote " << a.out_dir << "/train.csv (" << a.n << " rows), " << a.out_dir
            << "/test.csv (" << a.n_test << " rows), " << a.out_dir << "/truth.json\n";
  return 0;
}

// --- fit ---------------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string out_dir = ".";
  std::string config;
  verge::RunConfig run;
};

int cmd_fit(const FitArgs& a) {
  const verge::Dataset data = load_training_data(a.data);
  verge::Hyperparameters h = verge::default_hyperparameters(data.P);
  verge::RunConfig rc = a.run;
  if (!a.config.empty()) {
    auto kv = verge::parse_config_file(a.config);
    verge::apply_run_keys(kv, rc);
    verge::apply_hyper_keys(kv, h);
    verge::reject_unknown_keys(kv, a.config);
  }
  h.validate();
  rc.validate();
  ensure_dir(a.out_dir);
  rc.state_dump_path = a.out_dir + "/failure_state.json";

  const int workers = env_workers();
  const std::vector<verge::ChainResult> results = verge::run_chains(data, h, rc, workers);

  verge::MoveStats combined;
  json stats;
  stats["chains"] = json::array();
  for (std::size_t c = 0; c < results.size(); ++c) {
    const std::string path = results.size() == 1
                                 ? a.out_dir + "/trace.jsonl"
                                 : a.out_dir + "/trace_chain" + std::to_string(c + 1) + ".jsonl";
    verge::write_trace_jsonl(results[c].trace, path);
    json entry = stats_to_json(results[c].stats);
    entry["chain"] = c + 1;
    stats["chains"].push_back(entry);
    combined += results[c].stats;
    std::cout << "wrote " << path << " (" << results[c].trace.records.size() << " records)\n";
  }
  stats["combined"] = stats_to_json(combined);
  {
    std::ofstream out(a.out_dir + "/move_stats.json");
    if (!out) throw verge::ValidationError("cannot write " + a.out_dir + "/move_stats.json");
    out << stats.dump(2) << "\n";
  }

  if (results.size() > 1) {
    json corr;
    corr["pairs"] = json::array();
    double min_pred = 1.0, min_cov = 1.0;
    std::vector<std::vector<double>> pred_ppis, cov_ppis;
    for (const auto& res : results) {
      const verge::Vector p = verge::predictor_ppi(res.trace);
      pred_ppis.emplace_back(p.data(), p.data() + p.size());
      const verge::Matrix cm = verge::covariate_ppi(res.trace);
      std::vector<double> flat;
      for (int r = 0; r < cm.rows(); ++r)
        for (int k = 0; k < cm.cols(); ++k) flat.push_back(cm(r, k));
      cov_ppis.push_back(std::move(flat));
    }
    for (std::size_t i = 0; i < results.size(); ++i) {
      for (std::size_t j = i + 1; j < results.size(); ++j) {
        const double rp = pearson(pred_ppis[i], pred_ppis[j]);
        const double rc2 = pearson(cov_ppis[i], cov_ppis[j]);
        corr["pairs"].push_back({{"chain_a", i + 1},
                                 {"chain_b", j + 1},
                                 {"predictor_ppi_pearson", rp},
                                 {"covariate_ppi_pearson", rc2}});
        if (!std::isnan(rp)) min_pred = std::min(min_pred, rp);
        if (!std::isnan(rc2)) min_cov = std::min(min_cov, rc2);
      }
    }
    corr["min_predictor_ppi_pearson"] = min_pred;
    corr["min_covariate_ppi_pearson"] = min_cov;
    std::ofstream out(a.out_dir + "/ppi_correlation.json");
    if (!out) throw verge::ValidationError("cannot write " + a.out_dir + "/ppi_correlation.json");
    out << corr.dump(2) << "\n";
    std::cout << "cross-chain predictor PPI correlation (min pair): " << min_pred << "\n";
  }
  return 0;
}

// --- summarize ---------------------------------------------------------------

struct SummarizeArgs {
  std::string trace;
  std::string out_dir = ".";
  std::string data;  // optional, enables coefficient curve output
  std::optional<double> fdr_target;
};

int cmd_summarize(const SummarizeArgs& a) {
  const verge::Trace trace = verge::read_trace_jsonl(a.trace);
  double threshold = 0.5;
  if (a.fdr_target) {
    const verge::Vector ppi = verge::predictor_ppi(trace);  // throws on empty trace
    threshold = verge::fdr_threshold(ppi, *a.fdr_target);
    std::cout << "FDR target " << *a.fdr_target << " -> PPI cutoff " << threshold << "\n";
  }
  const verge::SelectionReport rep = verge::make_selection_report(trace, threshold);
  ensure_dir(a.out_dir);
  verge::write_report_json(rep, a.out_dir + "/report.json");
  verge::write_ppi_csv(rep, a.out_dir + "/ppi.csv");
  verge::write_edges_csv(rep, a.out_dir + "/edges.csv");

  std::cout << "selected predictors:";
  if (rep.selected_predictors.empty()) std::cout << " (none)";
  for (int j : rep.selected_predictors) std::cout << " x" << (j + 1);
  std::cout << "\nselected covariate pairs:";
  if (rep.selected_covariates.empty()) std::cout << " (none)";
  for (const auto& c : rep.selected_covariates)
    std::cout << " (x" << (c.first + 1) << ",z" << (c.second + 1) << ")";
  std::cout << "\nselected edges: " << rep.selected_edges.size() << "\n";

  if (!a.data.empty()) {
    const verge::RawData raw = verge::read_csv(a.data);
    if (raw.Z.rows() != trace.meta.n)
      throw verge::ValidationError("summarize: --data row count does not match the trace");
    for (int j : rep.selected_predictors) {
      const std::string path = a.out_dir + "/coef_x" + std::to_string(j + 1) + ".csv";
      verge::write_coefficient_curve_csv(raw.Z, rep.beta_hat.row(j).transpose(), path);
    }
  }
  std::cout << "wrote " << a.out_dir << "/report.json, ppi.csv, edges.csv\n";
  return 0;
}

// --- predict -----------------------------------------------------------------

struct PredictArgs {
  std::string trace;
  std::string train;
  std::string test;
  std::string out = "predictions.csv";
};

int cmd_predict(const PredictArgs& a) {
  const verge::Trace trace = verge::read_trace_jsonl(a.trace);
  const verge::Dataset train = load_training_data(a.train);
  const verge::RawData test = verge::read_csv(a.test);
  const verge::Matrix X_star = train.transforms.transform_x(test.X);
  const verge::Matrix Z_star = train.transforms.transform_z(test.Z);

  const verge::PredictResult res = verge::predict(trace, train, X_star, Z_star);
  const verge::Vector y_hat_raw = train.transforms.uncenter_y(res.y_hat);

  std::ofstream out(a.out);
  if (!out) throw verge::ValidationError("cannot write " + a.out);
  out << (test.has_y ? "y_hat,y\n" : "y_hat\n");
  for (int i = 0; i < y_hat_raw.size(); ++i) {
    out << verge::format_g17(y_hat_raw(i));
    if (test.has_y) out << "," << verge::format_g17(test.y(i));
    out << "\n";
  }
  std::cout << "wrote " << a.out << " (" << y_hat_raw.size() << " rows, "
            << res.qualifying_records << " qualifying posterior records)\n";
  if (test.has_y) std::cout << "PMSE: " << verge::pmse(y_hat_raw, test.y) << "\n";
  return 0;
}

// --- benchmark ---------------------------------------------------------------

struct BenchmarkArgs {
  std::string config;
  std::string out_dir = ".";
  std::string scenario_name = "base";
  verge::ScenarioConfig scenario;
};

int cmd_benchmark(const BenchmarkArgs& a) {
  if (a.scenario_name != "base")
    throw verge::ValidationError("unknown scenario '" + a.scenario_name +
                                 "' (only \"base\" is defined)");
  verge::ScenarioConfig sc = a.scenario;
  if (!a.config.empty()) {
    auto kv = verge::parse_config_file(a.config);
    verge::apply_scenario_keys(kv, sc);
    verge::reject_unknown_keys(kv, a.config);
  }
  sc.validate();
  ensure_dir(a.out_dir);

  const int workers = env_workers();
  const verge::CampaignResult res = verge::run_campaign(sc, workers);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << render_campaign_table(res);
  verge::write_campaign_csv(res, a.out_dir + "/campaign.csv");
  std::cout << "wrote " << a.out_dir << "/campaign.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"verge: varying effects regression with graph estimation"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  c_sim->add_option("--P", sim.P, "number of predictors (multiple of 10)");
  c_sim->add_option("--n", sim.n, "training rows");
  c_sim->add_option("--n-test", sim.n_test, "test rows");
  c_sim->add_option("--K", sim.K, "number of covariates");
  c_sim->add_option("--seed", sim.seed, "RNG seed");
  c_sim->add_option("--out-dir", sim.out_dir, "output directory");

  FitArgs fit;
  CLI::App* c_fit = app.add_subcommand("fit", "run the MCMC sampler");
  c_fit->add_option("--data", fit.data, "training CSV (y,x1..,z1..)")->required();
  c_fit->add_option("--out-dir", fit.out_dir, "output directory");
  c_fit->add_option("--config", fit.config, "key=value config file (overrides flags)");
  c_fit->add_option("--iters", fit.run.total_iterations, "total iterations");
  c_fit->add_option("--burn-in", fit.run.burn_in, "burn-in iterations");
  c_fit->add_option("--thin", fit.run.thin, "thinning stride");
  c_fit->add_option("--seed", fit.run.seed, "master RNG seed");
  c_fit->add_option("--chains", fit.run.chains, "number of chains");
  c_fit->add_flag("--flat-likelihood", fit.run.flat_likelihood,
                  "replace the likelihood with a constant (prior sampling)");
  c_fit->add_flag("--progress", fit.run.progress, "print progress to stderr");

  SummarizeArgs summ;
  double fdr_target = 0.0;
  CLI::App* c_sum = app.add_subcommand("summarize", "selection report from a trace");
  c_sum->add_option("--trace", summ.trace, "trace.jsonl from fit")->required();
  c_sum->add_option("--out-dir", summ.out_dir, "output directory");
  c_sum->add_option("--data", summ.data, "training CSV, enables coefficient curves");
  CLI::Option* fdr_opt =
      c_sum->add_option("--fdr", fdr_target, "select predictors at this Bayesian FDR target");

  PredictArgs pred;
  CLI::App* c_pred = app.add_subcommand("predict", "predict held-out responses");
  c_pred->add_option("--trace", pred.trace, "trace.jsonl from fit")->required();
  c_pred->add_option("--train", pred.train, "training CSV used for the fit")->required();
  c_pred->add_option("--test", pred.test, "test CSV (y column optional)")->required();
  c_pred->add_option("--out", pred.out, "output CSV path");

  BenchmarkArgs bench;
  bool desk_scale = false;
  CLI::App* c_bench = app.add_subcommand("benchmark", "replicated simulation study");
  c_bench->add_option("--config", bench.config, "key=value scenario file (overrides flags)");
  c_bench->add_option("--out-dir", bench.out_dir, "output directory");
  c_bench->add_option("--scenario", bench.scenario_name, "named scenario (only \"base\")");
  c_bench->add_flag("--desk-scale", desk_scale,
                    "shrink to P=20 with 12,000 iterations (6,000 burn-in)");
  c_bench->add_option("--replicates", bench.scenario.replicates, "independent replicates");
  c_bench->add_option("--P", bench.scenario.P, "predictors (multiple of 10)");
  c_bench->add_option("--n", bench.scenario.n, "training rows");
  c_bench->add_option("--n-test", bench.scenario.n_test, "test rows");
  c_bench->add_option("--K", bench.scenario.K, "covariates");
  c_bench->add_option("--seed", bench.scenario.seed, "master seed");
  c_bench->add_option("--iters", bench.scenario.run.total_iterations, "iterations per replicate");
  c_bench->add_option("--burn-in", bench.scenario.run.burn_in, "burn-in per replicate");
  c_bench->add_option("--thin", bench.scenario.run.thin, "thinning stride");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_sim) return cmd_simulate(sim);
    if (*c_fit) return cmd_fit(fit);
    if (*c_sum) {
      if (fdr_opt->count() > 0) summ.fdr_target = fdr_target;
      return cmd_summarize(summ);
    }
    if (*c_pred) return cmd_predict(pred);
    if (*c_bench) {
      if (desk_scale) {
        if (c_bench->count("--P") == 0) bench.scenario.P = 20;
        if (c_bench->count("--iters") == 0) bench.scenario.run.total_iterations = 12000;
        if (c_bench->count("--burn-in") == 0) bench.scenario.run.burn_in = 6000;
      }
      return cmd_benchmark(bench);
    }
  } catch (const verge::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const verge::EmptyTraceError& e) {
    std::cerr << "empty trace: " << e.what() << "\n";
    return 4;
  } catch (const verge::PredictionError& e) {
    std::cerr << "prediction undefined: " << e.what() << "\n";
    return 5;
  } catch (const verge::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
