#ifndef VERGE_POSTERIOR_HPP
#define VERGE_POSTERIOR_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "verge/chain_state.hpp"
#include "verge/common.hpp"
#include "verge/dataset.hpp"
#include "verge/kernel.hpp"

namespace verge {

inline void require_nonempty(const Trace& trace, const char* where) {
  if (trace.records.empty())
    throw EmptyTraceError(std::string(where) + ": trace holds no records");
}

// Marginal posterior inclusion probability of each predictor: fraction of
// retained records with gamma_j = 1.
inline Vector predictor_ppi(const Trace& trace) {
  require_nonempty(trace, "predictor_ppi");
  Vector ppi = Vector::Zero(trace.meta.P);
  for (const auto& rec : trace.records)
    for (int j : rec.included) ppi(j) += 1.0;
  ppi /= static_cast<double>(trace.records.size());
  return ppi;
}

// Conditional covariate PPI: among records where predictor j is included, the
// fraction with gamma_tilde_jk = 1. Zero when the predictor never enters.
inline Matrix covariate_ppi(const Trace& trace) {
  require_nonempty(trace, "covariate_ppi");
  Matrix counts = Matrix::Zero(trace.meta.P, trace.meta.K);
  Vector denom = Vector::Zero(trace.meta.P);
  for (const auto& rec : trace.records) {
    for (std::size_t i = 0; i < rec.included.size(); ++i) {
      const int j = rec.included[i];
      denom(j) += 1.0;
      for (int k = 0; k < trace.meta.K; ++k) counts(j, k) += rec.params[i].gamma_tilde[k];
    }
  }
  Matrix ppi = Matrix::Zero(trace.meta.P, trace.meta.K);
  for (int j = 0; j < trace.meta.P; ++j)
    if (denom(j) > 0.0) ppi.row(j) = counts.row(j) / denom(j);
  return ppi;
}

inline std::map<std::pair<int, int>, double> edge_ppi(const Trace& trace) {
  require_nonempty(trace, "edge_ppi");
  std::map<std::pair<int, int>, double> counts;
  for (const auto& rec : trace.records)
    for (const auto& e : rec.edges) counts[e] += 1.0;
  for (auto& kv : counts) kv.second /= static_cast<double>(trace.records.size());
  return counts;
}

// Expected false discovery rate at cutoff kappa:
// sum I(delta_j > kappa)(1 - delta_j) / #(delta_j > kappa). NaN when the
// exceedance set is empty.
inline double expected_fdr(const Vector& ppis, double kappa) {
  double num = 0.0;
  int cnt = 0;
  for (int i = 0; i < ppis.size(); ++i) {
    if (ppis(i) > kappa) {
      num += 1.0 - ppis(i);
      ++cnt;
    }
  }
  return cnt == 0 ? std::numeric_limits<double>::quiet_NaN() : num / cnt;
}

// Smallest cutoff on the grid {0} union {observed PPIs} whose expected FDR is
// at or below the target; 1 when no cutoff qualifies. Cutoffs with empty
// exceedance sets are skipped.
inline double fdr_threshold(const Vector& ppis, double target) {
  if (ppis.size() == 0) throw ValidationError("fdr_threshold: empty ppi vector");
  if (!(target > 0.0 && target < 1.0))
    throw ValidationError("fdr_threshold: target must lie in (0, 1)");
  std::vector<double> grid(ppis.data(), ppis.data() + ppis.size());
  grid.push_back(0.0);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  for (double kappa : grid) {
    const double fdr = expected_fdr(ppis, kappa);
    if (!std::isnan(fdr) && fdr <= target) return kappa;
  }
  return 1.0;
}

// Posterior median graph: edges with marginal PPI strictly above one half.
inline std::vector<std::pair<int, int>> posterior_median_graph(const Trace& trace) {
  require_nonempty(trace, "posterior_median_graph");
  std::vector<std::pair<int, int>> out;
  for (const auto& kv : edge_ppi(trace))
    if (kv.second > 0.5) out.push_back(kv.first);
  return out;
}

// beta_hat row j: average of the sampled beta_j curves over records where
// predictor j is included; zero when it never enters.
inline Matrix average_beta(const Trace& trace) {
  require_nonempty(trace, "average_beta");
  Matrix sum = Matrix::Zero(trace.meta.P, trace.meta.n);
  Vector denom = Vector::Zero(trace.meta.P);
  for (const auto& rec : trace.records) {
    for (std::size_t i = 0; i < rec.included.size(); ++i) {
      const int j = rec.included[i];
      denom(j) += 1.0;
      sum.row(j) += rec.beta[i].transpose();
    }
  }
  for (int j = 0; j < trace.meta.P; ++j)
    if (denom(j) > 0.0) sum.row(j) /= denom(j);
  return sum;
}

struct SelectionReport {
  Vector predictor_ppi;                                          // P
  Matrix covariate_ppi;                                          // P x K
  std::vector<std::pair<std::pair<int, int>, double>> edge_ppi;  // lexicographic
  std::vector<int> selected_predictors;
  std::vector<std::pair<int, int>> selected_edges;
  std::vector<std::pair<int, int>> selected_covariates;  // (predictor, covariate)
  Matrix beta_hat;                                       // P x n
  double predictor_threshold = 0.5;
};

// Builds the full report. Predictors are selected at `predictor_threshold`
// (0.5 default, or an FDR-derived cutoff); covariates and edges always use
// the median-model rule PPI > 0.5.
inline SelectionReport make_selection_report(const Trace& trace,
                                             double predictor_threshold = 0.5) {
  require_nonempty(trace, "make_selection_report");
  SelectionReport rep;
  rep.predictor_threshold = predictor_threshold;
  rep.predictor_ppi = predictor_ppi(trace);
  rep.covariate_ppi = covariate_ppi(trace);
  for (const auto& kv : edge_ppi(trace)) rep.edge_ppi.push_back(kv);
  for (int j = 0; j < trace.meta.P; ++j)
    if (rep.predictor_ppi(j) > predictor_threshold) rep.selected_predictors.push_back(j);
  for (const auto& kv : rep.edge_ppi)
    if (kv.second > 0.5) rep.selected_edges.push_back(kv.first);
  for (int j = 0; j < trace.meta.P; ++j)
    for (int k = 0; k < trace.meta.K; ++k)
      if (rep.covariate_ppi(j, k) > 0.5) rep.selected_covariates.emplace_back(j, k);
  rep.beta_hat = average_beta(trace);
  return rep;
}

namespace detail {

// Kernel parameters for prediction: covariates not selected by the marginal
// covariate PPIs have rho forced to 1 (and the indicator cleared) so they
// drop out of the cross-covariance.
inline KernelParams filter_params(const KernelParams& p, const Matrix& cov_ppi, int j) {
  KernelParams f = p;
  for (std::size_t k = 0; k < f.gamma_tilde.size(); ++k) {
    if (!(cov_ppi(j, static_cast<int>(k)) > 0.5) || p.gamma_tilde[k] == 0) {
      f.gamma_tilde[k] = 0;
      f.rho(static_cast<int>(k)) = 1.0;
    }
  }
  return f;
}

}  // namespace detail

struct PredictResult {
  Vector y_hat;             // centered scale, same convention as Dataset.y
  long qualifying_records;  // L
};

// Held-out prediction per the posterior-averaging estimator: the averaged
// coefficient curve of each selected predictor is transported to the test
// covariates through that record's kernel, beta*_j = C(Z*,Z) C(Z,Z)^{-1}
// beta_hat_j, then y* averages sum_j X*_j . beta*_j over the L records in
// which every selected predictor is included. The training covariance keeps
// the jitter term; the cross term has none.
inline PredictResult predict(const Trace& trace, const Dataset& train, const Matrix& X_star,
                             const Matrix& Z_star) {
  require_nonempty(trace, "predict");
  if (X_star.cols() != trace.meta.P)
    throw ValidationError("predict: X_star column count does not match the trace");
  if (Z_star.cols() != trace.meta.K)
    throw ValidationError("predict: Z_star column count does not match the trace");
  if (X_star.rows() != Z_star.rows())
    throw ValidationError("predict: X_star and Z_star row counts differ");

  const Vector ppi = predictor_ppi(trace);
  const Matrix cov_ppi = covariate_ppi(trace);
  const Matrix beta_hat = average_beta(trace);
  std::vector<int> selected;
  for (int j = 0; j < trace.meta.P; ++j)
    if (ppi(j) > 0.5) selected.push_back(j);

  const int m = static_cast<int>(X_star.rows());
  Vector acc = Vector::Zero(m);
  long L = 0;
  for (const auto& rec : trace.records) {
    const bool qualifies = std::all_of(selected.begin(), selected.end(), [&](int j) {
      return std::binary_search(rec.included.begin(), rec.included.end(), j);
    });
    if (!qualifies) continue;
    ++L;
    for (int j : selected) {
      const auto it = std::lower_bound(rec.included.begin(), rec.included.end(), j);
      const std::size_t pos = static_cast<std::size_t>(it - rec.included.begin());
      const KernelParams params = detail::filter_params(rec.params[pos], cov_ppi, j);
      const Matrix C_train = build_kernel(train.Z, params);
      Eigen::LLT<Matrix> llt(C_train);
      if (llt.info() != Eigen::Success)
        throw NumericalError("predict: training covariance not positive definite");
      const Vector w = llt.solve(beta_hat.row(j).transpose());
      const Vector beta_star = build_cross_kernel(Z_star, train.Z, params) * w;
      acc.noalias() += X_star.col(j).cwiseProduct(beta_star);
    }
  }
  if (L == 0)
    throw PredictionError(
        "predict: no posterior record includes every selected predictor (L = 0); selection is "
        "unstable, consider a longer run");
  PredictResult res;
  res.y_hat = acc / static_cast<double>(L);
  res.qualifying_records = L;
  return res;
}

// --- report serialization ---------------------------------------------------

inline nlohmann::json report_to_json(const SelectionReport& rep) {
  nlohmann::json j;
  j["predictor_threshold"] = rep.predictor_threshold;
  j["predictor_ppi"] = std::vector<double>(rep.predictor_ppi.data(),
                                           rep.predictor_ppi.data() + rep.predictor_ppi.size());
  nlohmann::json cov = nlohmann::json::array();
  for (int r = 0; r < rep.covariate_ppi.rows(); ++r) {
    std::vector<double> row(rep.covariate_ppi.cols());
    for (int c = 0; c < rep.covariate_ppi.cols(); ++c) row[c] = rep.covariate_ppi(r, c);
    cov.push_back(row);
  }
  j["covariate_ppi"] = cov;
  nlohmann::json eppi = nlohmann::json::array();
  for (const auto& kv : rep.edge_ppi)
    eppi.push_back({{"i", kv.first.first}, {"j", kv.first.second}, {"ppi", kv.second}});
  j["edge_ppi"] = eppi;
  j["selected_predictors"] = rep.selected_predictors;
  nlohmann::json sedges = nlohmann::json::array();
  for (const auto& e : rep.selected_edges) sedges.push_back({e.first, e.second});
  j["selected_edges"] = sedges;
  nlohmann::json scov = nlohmann::json::array();
  for (const auto& c : rep.selected_covariates) scov.push_back({c.first, c.second});
  j["selected_covariates"] = scov;
  nlohmann::json bh = nlohmann::json::array();
  for (int r = 0; r < rep.beta_hat.rows(); ++r) {
    std::vector<double> row(rep.beta_hat.cols());
    for (int c = 0; c < rep.beta_hat.cols(); ++c) row[c] = rep.beta_hat(r, c);
    bh.push_back(row);
  }
  j["beta_hat"] = bh;
  return j;
}

inline void write_report_json(const SelectionReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("report: cannot write " + path);
  out << report_to_json(rep).dump(2) << "\n";
}

inline void write_ppi_csv(const SelectionReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("report: cannot write " + path);
  const int K = static_cast<int>(rep.covariate_ppi.cols());
  out << "predictor,ppi,selected";
  for (int k = 1; k <= K; ++k) out << ",cov_ppi_z" << k;
  out << "\n";
  for (int j = 0; j < rep.predictor_ppi.size(); ++j) {
    const bool sel = rep.predictor_ppi(j) > rep.predictor_threshold;
    out << "x" << (j + 1) << "," << format_g17(rep.predictor_ppi(j)) << "," << (sel ? 1 : 0);
    for (int k = 0; k < K; ++k) out << "," << format_g17(rep.covariate_ppi(j, k));
    out << "\n";
  }
}

inline void write_edges_csv(const SelectionReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("report: cannot write " + path);
  out << "node_i,node_j,ppi,selected\n";
  for (const auto& kv : rep.edge_ppi) {
    out << "x" << (kv.first.first + 1) << ",x" << (kv.first.second + 1) << ","
        << format_g17(kv.second) << "," << (kv.second > 0.5 ? 1 : 0) << "\n";
  }
}

// Plot-ready coefficient curve for one predictor: one row per training
// subject, the subject's covariate values followed by the estimated
// coefficient.
inline void write_coefficient_curve_csv(const Matrix& Z_display, const Vector& beta_hat_j,
                                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("report: cannot write " + path);
  const int K = static_cast<int>(Z_display.cols());
  for (int k = 1; k <= K; ++k) out << "z" << k << ",";
  out << "beta_hat\n";
  for (int i = 0; i < Z_display.rows(); ++i) {
    for (int k = 0; k < K; ++k) out << format_g17(Z_display(i, k)) << ",";
    out << format_g17(beta_hat_j(i)) << "\n";
  }
}

}  // namespace verge

#endif  // VERGE_POSTERIOR_HPP
