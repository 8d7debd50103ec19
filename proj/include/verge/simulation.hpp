#ifndef VERGE_SIMULATION_HPP
#define VERGE_SIMULATION_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "verge/common.hpp"
#include "verge/dataset.hpp"
#include "verge/hyperparams.hpp"
#include "verge/posterior.hpp"
#include "verge/rng.hpp"
#include "verge/sampler.hpp"

namespace verge {

enum class BetaFunction { constant, sine, quadratic, linear, cosine, gaussian_mix, zero };

inline const char* beta_function_name(BetaFunction tag) {
  switch (tag) {
    case BetaFunction::constant: return "constant";
    case BetaFunction::sine: return "sine";
    case BetaFunction::quadratic: return "quadratic";
    case BetaFunction::linear: return "linear";
    case BetaFunction::cosine: return "cosine";
    case BetaFunction::gaussian_mix: return "gaussian-mix";
    case BetaFunction::zero: return "zero";
  }
  throw ValidationError("beta_function_name: unknown tag");
}

inline BetaFunction beta_function_from_name(const std::string& name) {
  for (BetaFunction tag : {BetaFunction::constant, BetaFunction::sine, BetaFunction::quadratic,
                           BetaFunction::linear, BetaFunction::cosine, BetaFunction::gaussian_mix,
                           BetaFunction::zero}) {
    if (name == beta_function_name(tag)) return tag;
  }
  throw ValidationError("beta_function_from_name: unknown tag '" + name + "'");
}

// Coefficient functions of the synthetic design, on the raw covariate scale
// z in [-1, 1]. The gaussian-mix tag is a negative mixture of two normal
// densities, everywhere below zero.
inline double generating_function(double z, BetaFunction tag) {
  auto phi = [](double x, double mean, double sd) {
    const double u = (x - mean) / sd;
    return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * M_PI));
  };
  switch (tag) {
    case BetaFunction::constant: return 0.3;
    case BetaFunction::sine: return 2.0 * std::sin(M_PI * z);
    case BetaFunction::quadratic: return 2.0 * z * z - 1.0;
    case BetaFunction::linear: return -2.0 * z;
    case BetaFunction::cosine: return 2.0 * std::cos(M_PI * z);
    case BetaFunction::gaussian_mix: return -2.0 * phi(z, 0.3, 0.3) - 3.0 * phi(z, -0.5, 0.3);
    case BetaFunction::zero: return 0.0;
  }
  throw ValidationError("generating_function: unknown tag");
}

// True if the coefficient actually varies with its covariate; constant and
// zero tags contribute no true covariate pair.
inline bool function_varies(BetaFunction tag) {
  return tag != BetaFunction::constant && tag != BetaFunction::zero;
}

struct ClusterCovariance {
  Matrix sigma;  // P x P
  std::vector<std::pair<int, int>> edges;
};

// Block-diagonal cluster covariance: P/5 clusters of one hub plus four
// leaves, unit variance, hub-leaf correlation 0.7, leaf-leaf 0.49 = 0.7^2, so
// leaves are conditionally independent given their hub (precision-zero pairs)
// and the true graph is exactly the hub-leaf star within each cluster.
inline ClusterCovariance make_cluster_covariance(int P) {
  if (P < 5 || P % 5 != 0)
    throw ValidationError("make_cluster_covariance: P must be a positive multiple of 5, got " +
                          std::to_string(P));
  ClusterCovariance out;
  out.sigma = Matrix::Zero(P, P);
  const int n_clusters = P / 5;
  for (int c = 0; c < n_clusters; ++c) {
    const int hub = 5 * c;
    for (int a = 0; a < 5; ++a) {
      for (int b = 0; b < 5; ++b) {
        const int i = 5 * c + a;
        const int j = 5 * c + b;
        if (i == j)
          out.sigma(i, j) = 1.0;
        else if (i == hub || j == hub)
          out.sigma(i, j) = 0.7;
        else
          out.sigma(i, j) = 0.49;
      }
    }
    for (int leaf = hub + 1; leaf < hub + 5; ++leaf) out.edges.emplace_back(hub, leaf);
  }
  return out;
}

struct SimTruth {
  IntVector true_gamma;                       // P
  std::vector<int> covariate_of;              // P, -1 when not a true predictor
  std::vector<BetaFunction> beta_fn;          // P, zero tag when not true
  std::vector<std::pair<int, int>> true_edges;
  Matrix sigma_g;
  double tau2_true = 1.0;

  // (j,k) = 1 where predictor j truly varies with covariate k.
  IntMatrix true_covariate_pairs(int K) const {
    IntMatrix out = IntMatrix::Zero(true_gamma.size(), K);
    for (int j = 0; j < true_gamma.size(); ++j)
      if (true_gamma(j) == 1 && function_varies(beta_fn[j]) && covariate_of[j] >= 0)
        out(j, covariate_of[j]) = 1;
    return out;
  }
};

struct SimulatedData {
  RawData raw_train;  // has y
  RawData raw_test;   // has y
  Dataset train;      // standardized with its own constants
  Matrix X_test;      // standardized with training constants
  Matrix Z_test;      // rescaled with training constants
  Vector y_test_raw;
  SimTruth truth;
};

// Synthetic dataset with a known ground truth: X rows from the cluster
// covariance, Z uniform on (-1,1), true predictors are the hubs of the first
// P/10 clusters with coefficient functions beta_1..beta_6 cycling in order,
// each tied to one uniformly drawn covariate, unit noise. Draw order is
// fixed, so a seed pins the dataset exactly.
inline SimulatedData gen_dataset(int P, int n, int n_test, int K, std::uint64_t seed) {
  if (P < 10 || P % 10 != 0)
    throw ValidationError("gen_dataset: P must be a positive multiple of 10, got " +
                          std::to_string(P));
  if (n < 2) throw ValidationError("gen_dataset: n must be at least 2");
  if (n_test < 1) throw ValidationError("gen_dataset: n_test must be at least 1");
  if (K < 1) throw ValidationError("gen_dataset: K must be at least 1");

  SimulatedData out;
  ClusterCovariance cc = make_cluster_covariance(P);
  out.truth.sigma_g = cc.sigma;
  out.truth.true_edges = cc.edges;
  out.truth.tau2_true = 1.0;

  Eigen::LLT<Matrix> llt(cc.sigma);
  if (llt.info() != Eigen::Success)
    throw NumericalError("gen_dataset: cluster covariance not positive definite");
  const Matrix L = llt.matrixL();

  Rng rng(derive_seed(seed, 0x5157ULL));
  const int total = n + n_test;
  Matrix X(total, P);
  Vector zbuf(P);
  for (int i = 0; i < total; ++i) {
    for (int j = 0; j < P; ++j) zbuf(j) = rng.normal();
    X.row(i) = (L * zbuf).transpose();
  }
  Matrix Z(total, K);
  for (int i = 0; i < total; ++i)
    for (int k = 0; k < K; ++k) Z(i, k) = rng.uniform(-1.0, 1.0);

  const int n_true = P / 10;
  out.truth.true_gamma = IntVector::Zero(P);
  out.truth.covariate_of.assign(P, -1);
  out.truth.beta_fn.assign(P, BetaFunction::zero);
  const BetaFunction cycle[6] = {BetaFunction::constant,  BetaFunction::sine,
                                 BetaFunction::quadratic, BetaFunction::linear,
                                 BetaFunction::cosine,    BetaFunction::gaussian_mix};
  for (int t = 0; t < n_true; ++t) {
    const int hub = 5 * t;
    out.truth.true_gamma(hub) = 1;
    out.truth.beta_fn[hub] = cycle[t % 6];
    out.truth.covariate_of[hub] = rng.uniform_int(K);
  }

  Vector y(total);
  for (int i = 0; i < total; ++i) {
    double mean = 0.0;
    for (int t = 0; t < n_true; ++t) {
      const int hub = 5 * t;
      mean += X(i, hub) * generating_function(Z(i, out.truth.covariate_of[hub]),
                                              out.truth.beta_fn[hub]);
    }
    y(i) = mean + rng.normal();
  }

  out.raw_train.has_y = true;
  out.raw_train.y = y.head(n);
  out.raw_train.X = X.topRows(n);
  out.raw_train.Z = Z.topRows(n);
  out.raw_test.has_y = true;
  out.raw_test.y = y.tail(n_test);
  out.raw_test.X = X.bottomRows(n_test);
  out.raw_test.Z = Z.bottomRows(n_test);

  out.train = standardize(out.raw_train.y, out.raw_train.X, out.raw_train.Z);
  out.X_test = out.train.transforms.transform_x(out.raw_test.X);
  out.Z_test = out.train.transforms.transform_z(out.raw_test.Z);
  out.y_test_raw = out.raw_test.y;
  return out;
}

struct SelectionMetrics {
  std::optional<double> tpr, fpr, f1, mcc;
};

// Confusion-matrix metrics with the rooted MCC denominator; any metric whose
// denominator is zero is reported absent rather than clamped.
inline SelectionMetrics selection_metrics(const std::vector<int>& truth,
                                          const std::vector<int>& estimate) {
  if (truth.size() != estimate.size())
    throw ValidationError("selection_metrics: length mismatch");
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] != 0;
    const bool e = estimate[i] != 0;
    if (t && e) ++tp;
    else if (!t && e) ++fp;
    else if (t && !e) ++fn;
    else ++tn;
  }
  SelectionMetrics m;
  if (tp + fn > 0) m.tpr = tp / (tp + fn);
  if (fp + tn > 0) m.fpr = fp / (fp + tn);
  if (2 * tp + fp + fn > 0) m.f1 = 2 * tp / (2 * tp + fp + fn);
  const double d = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (d > 0) m.mcc = (tp * tn - fp * fn) / std::sqrt(d);
  return m;
}

// Area under the ROC curve by the rank statistic (tied scores get averaged
// ranks); absent when the truth vector is degenerate.
inline std::optional<double> auc_from_ppis(const std::vector<int>& truth,
                                           const std::vector<double>& scores) {
  if (truth.size() != scores.size())
    throw ValidationError("auc_from_ppis: length mismatch");
  for (double s : scores)
    if (!(s >= 0.0 && s <= 1.0))
      throw ValidationError("auc_from_ppis: scores must lie in [0, 1]");
  const std::size_t N = truth.size();
  std::size_t n_pos = 0;
  for (int t : truth) n_pos += t != 0 ? 1 : 0;
  if (n_pos == 0 || n_pos == N) return std::nullopt;

  std::vector<std::size_t> idx(N);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(N);
  std::size_t i = 0;
  while (i < N) {
    std::size_t j = i;
    while (j + 1 < N && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg = 0.5 * (i + j) + 1.0;  // 1-based average rank of the tie block
    for (std::size_t t = i; t <= j; ++t) rank[idx[t]] = avg;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (std::size_t t = 0; t < N; ++t)
    if (truth[t] != 0) rank_sum_pos += rank[t];
  const double n1 = static_cast<double>(n_pos);
  const double n0 = static_cast<double>(N - n_pos);
  return (rank_sum_pos - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
}

inline double pmse(const Vector& y_hat, const Vector& y_test) {
  if (y_hat.size() != y_test.size()) throw ValidationError("pmse: length mismatch");
  if (y_hat.size() == 0) throw ValidationError("pmse: empty vectors");
  return (y_hat - y_test).squaredNorm() / static_cast<double>(y_hat.size());
}

struct ScenarioConfig {
  int n = 200;
  int P = 60;
  int K = 3;
  int n_test = 50;
  int replicates = 25;
  std::uint64_t seed = 1;
  RunConfig run;                    // iteration budget, thinning, step sizes
  Hyperparameters hyper;            // pi_edge refreshed from P unless overridden
  bool hyper_pi_overridden = false; // set when a config file pins pi_edge
  int inject_failure_at = 0;        // 1-based replicate index; 0 disables (test hook)

  void validate() const {
    if (replicates < 1) throw ValidationError("scenario: replicates must be at least 1");
    run.validate();
  }
};

struct MetricRow {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  int count = 0;  // replicates where the metric was defined
};

struct CampaignResult {
  std::vector<MetricRow> rows;
  int completed = 0;
  int attempted = 0;
  std::vector<std::string> warnings;
};

namespace detail {

struct ReplicateScore {
  bool ok = false;
  std::string warning;
  std::optional<double> tpr, fpr, mcc, f1, auc, pmse;
  std::optional<double> cov_tpr, cov_fpr, cov_mcc, cov_f1;
  std::optional<double> edge_tpr, edge_fpr, edge_mcc, edge_f1;
};

inline ReplicateScore score_replicate(const ScenarioConfig& cfg, int rep_index) {
  ReplicateScore out;
  try {
    if (cfg.inject_failure_at == rep_index)
      throw NumericalError("injected failure (test hook)");
    SimulatedData sim =
        gen_dataset(cfg.P, cfg.n, cfg.n_test, cfg.K, derive_seed(cfg.seed, 1000 + rep_index));
    Hyperparameters h = cfg.hyper;
    if (!cfg.hyper_pi_overridden) h.pi_edge = default_hyperparameters(cfg.P).pi_edge;
    RunConfig rc = cfg.run;
    rc.chains = 1;
    rc.seed = derive_seed(cfg.seed, 2000 + rep_index);
    const ChainResult res = run_chain(sim.train, h, rc);
    const SelectionReport rep = make_selection_report(res.trace);

    const int P = cfg.P;
    std::vector<int> truth(P), est(P);
    std::vector<double> scores(P);
    for (int j = 0; j < P; ++j) {
      truth[j] = sim.truth.true_gamma(j);
      est[j] = rep.predictor_ppi(j) > 0.5 ? 1 : 0;
      scores[j] = rep.predictor_ppi(j);
    }
    const SelectionMetrics pm = selection_metrics(truth, est);
    out.tpr = pm.tpr;
    out.fpr = pm.fpr;
    out.mcc = pm.mcc;
    out.f1 = pm.f1;
    out.auc = auc_from_ppis(truth, scores);

    const IntMatrix cov_truth = sim.truth.true_covariate_pairs(cfg.K);
    std::vector<int> ct, ce;
    for (int j = 0; j < P; ++j) {
      for (int k = 0; k < cfg.K; ++k) {
        ct.push_back(cov_truth(j, k));
        ce.push_back(rep.covariate_ppi(j, k) > 0.5 ? 1 : 0);
      }
    }
    const SelectionMetrics cm = selection_metrics(ct, ce);
    out.cov_tpr = cm.tpr;
    out.cov_fpr = cm.fpr;
    out.cov_mcc = cm.mcc;
    out.cov_f1 = cm.f1;

    std::vector<int> et, ee;
    IntMatrix truth_edge = IntMatrix::Zero(P, P);
    for (const auto& e : sim.truth.true_edges) truth_edge(e.first, e.second) = 1;
    IntMatrix est_edge = IntMatrix::Zero(P, P);
    for (const auto& e : rep.selected_edges) est_edge(e.first, e.second) = 1;
    for (int i = 0; i < P; ++i) {
      for (int j = i + 1; j < P; ++j) {
        et.push_back(truth_edge(i, j));
        ee.push_back(est_edge(i, j));
      }
    }
    const SelectionMetrics em = selection_metrics(et, ee);
    out.edge_tpr = em.tpr;
    out.edge_fpr = em.fpr;
    out.edge_mcc = em.mcc;
    out.edge_f1 = em.f1;

    try {
      const PredictResult pred = predict(res.trace, sim.train, sim.X_test, sim.Z_test);
      const Vector y_hat_raw = sim.train.transforms.uncenter_y(pred.y_hat);
      out.pmse = pmse(y_hat_raw, sim.y_test_raw);
    } catch (const PredictionError& e) {
      out.warning = "replicate " + std::to_string(rep_index) + ": prediction skipped: " + e.what();
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.warning = "replicate " + std::to_string(rep_index) + " failed: " + e.what();
  }
  return out;
}

inline MetricRow aggregate(const std::string& name,
                           const std::vector<std::optional<double>>& values) {
  MetricRow row;
  row.name = name;
  std::vector<double> defined;
  for (const auto& v : values)
    if (v) defined.push_back(*v);
  row.count = static_cast<int>(defined.size());
  if (defined.empty()) return row;
  row.mean = std::accumulate(defined.begin(), defined.end(), 0.0) / defined.size();
  if (defined.size() > 1) {
    double ss = 0.0;
    for (double v : defined) ss += (v - row.mean) * (v - row.mean);
    row.sd = std::sqrt(ss / (defined.size() - 1));
  }
  return row;
}

}  // namespace detail

// Generates, fits, and scores `replicates` independent datasets, then
// aggregates mean and sd per metric. Failed replicates are excluded with a
// warning; the campaign always completes.
inline CampaignResult run_campaign(const ScenarioConfig& cfg, int workers = 1) {
  cfg.validate();
  const int R = cfg.replicates;
  std::vector<detail::ReplicateScore> scores(R);
  if (workers <= 1 || R == 1) {
    for (int i = 0; i < R; ++i) scores[i] = detail::score_replicate(cfg, i + 1);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int T = std::min(workers, R);
    for (int t = 0; t < T; ++t) {
      pool.emplace_back([&]() {
        for (int i = next.fetch_add(1); i < R; i = next.fetch_add(1))
          scores[i] = detail::score_replicate(cfg, i + 1);
      });
    }
    for (auto& th : pool) th.join();
  }

  CampaignResult out;
  out.attempted = R;
  std::vector<std::optional<double>> tpr, fpr, mcc, f1, auc, pm, ct, cf, cm, c1, et, ef, em, e1;
  for (const auto& s : scores) {
    if (!s.warning.empty()) out.warnings.push_back(s.warning);
    if (!s.ok) continue;
    ++out.completed;
    tpr.push_back(s.tpr);
    fpr.push_back(s.fpr);
    mcc.push_back(s.mcc);
    f1.push_back(s.f1);
    auc.push_back(s.auc);
    pm.push_back(s.pmse);
    ct.push_back(s.cov_tpr);
    cf.push_back(s.cov_fpr);
    cm.push_back(s.cov_mcc);
    c1.push_back(s.cov_f1);
    et.push_back(s.edge_tpr);
    ef.push_back(s.edge_fpr);
    em.push_back(s.edge_mcc);
    e1.push_back(s.edge_f1);
  }
  out.rows.push_back(detail::aggregate("TPR", tpr));
  out.rows.push_back(detail::aggregate("FPR", fpr));
  out.rows.push_back(detail::aggregate("MCC", mcc));
  out.rows.push_back(detail::aggregate("F1", f1));
  out.rows.push_back(detail::aggregate("AUC", auc));
  out.rows.push_back(detail::aggregate("PMSE", pm));
  out.rows.push_back(detail::aggregate("cov_TPR", ct));
  out.rows.push_back(detail::aggregate("cov_FPR", cf));
  out.rows.push_back(detail::aggregate("cov_MCC", cm));
  out.rows.push_back(detail::aggregate("cov_F1", c1));
  out.rows.push_back(detail::aggregate("edge_TPR", et));
  out.rows.push_back(detail::aggregate("edge_FPR", ef));
  out.rows.push_back(detail::aggregate("edge_MCC", em));
  out.rows.push_back(detail::aggregate("edge_F1", e1));
  return out;
}

// "0.960(.073)" formatting used by the result tables.
inline std::string format_mean_sd(double mean, double sd) {
  char m[32], s[32];
  std::snprintf(m, sizeof(m), "%.3f", mean);
  std::snprintf(s, sizeof(s), "%.3f", sd);
  std::string sv(s);
  if (sv.size() > 1 && sv[0] == '0') sv.erase(0, 1);  // 0.073 -> .073
  return std::string(m) + "(" + sv + ")";
}

inline std::string render_campaign_table(const CampaignResult& res) {
  std::string out;
  out += "metric      mean(sd)        defined\n";
  for (const auto& row : res.rows) {
    char line[128];
    if (row.count == 0) {
      std::snprintf(line, sizeof(line), "%-11s %-15s %d\n", row.name.c_str(), "-", 0);
    } else {
      std::snprintf(line, sizeof(line), "%-11s %-15s %d\n", row.name.c_str(),
                    format_mean_sd(row.mean, row.sd).c_str(), row.count);
    }
    out += line;
  }
  char tail[128];
  std::snprintf(tail, sizeof(tail), "replicates: %d attempted, %d completed, %d warnings\n",
                res.attempted, res.completed, static_cast<int>(res.warnings.size()));
  out += tail;
  return out;
}

inline void write_campaign_csv(const CampaignResult& res, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("campaign: cannot write " + path);
  out << "metric,mean,sd,defined\n";
  for (const auto& row : res.rows) {
    if (row.count == 0)
      out << row.name << ",,," << 0 << "\n";
    else
      out << row.name << "," << format_g17(row.mean) << "," << format_g17(row.sd) << ","
          << row.count << "\n";
  }
}

}  // namespace verge

#endif  // VERGE_SIMULATION_HPP
