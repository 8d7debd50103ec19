#ifndef VERGE_HYPERPARAMS_HPP
#define VERGE_HYPERPARAMS_HPP

#include <algorithm>
#include <cmath>
#include <string>

#include "verge/common.hpp"

namespace verge {

struct Hyperparameters {
  // Graph: spike/slab scales and diagonal exponential rate of the precision prior,
  // prior edge-inclusion probability.
  double nu0 = 0.05;
  double nu1 = 5.0;
  double lambda_diag = 1.0;
  double pi_edge = 0.1;

  // MRF prior on predictor inclusion: sparsity offset and graph-coupling strength.
  double a_mrf = std::log(0.1);
  double b_mrf = 0.5;

  // Inverse-gamma prior on the noise variance.
  double a0 = 0.01;
  double b0 = 0.01;

  // Gamma priors on kernel precisions: intercept (lambda_a), smooth deviation
  // (lambda_z), nugget (r).
  double a_lambda = 1.0;
  double b_lambda = 1.0;
  double a_z = 1.0;
  double b_z = 1.0;
  double a_r = 1.0;
  double b_r = 1.0;

  // Prior inclusion probability of each effect-modifying covariate.
  double alpha_cov = 0.5;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw ValidationError(std::string("hyperparameters: ") + name + " must be positive");
    };
    positive(nu0, "nu0");
    positive(nu1, "nu1");
    if (!(nu0 < nu1))
      throw ValidationError("hyperparameters: nu0 must be strictly less than nu1");
    positive(lambda_diag, "lambda_diag");
    if (!(pi_edge > 0.0 && pi_edge < 1.0))
      throw ValidationError("hyperparameters: pi_edge must lie in (0, 1)");
    if (!std::isfinite(a_mrf))
      throw ValidationError("hyperparameters: a_mrf must be finite");
    if (!(b_mrf >= 0.0) || !std::isfinite(b_mrf))
      throw ValidationError("hyperparameters: b_mrf must be non-negative");
    positive(a0, "a0");
    positive(b0, "b0");
    positive(a_lambda, "a_lambda");
    positive(b_lambda, "b_lambda");
    positive(a_z, "a_z");
    positive(b_z, "b_z");
    positive(a_r, "a_r");
    positive(b_r, "b_r");
    if (!(alpha_cov > 0.0 && alpha_cov < 1.0))
      throw ValidationError("hyperparameters: alpha_cov must lie in (0, 1)");
  }
};

// Defaults scale the edge prior to an expected two neighbours per node, capped
// at 0.5 for tiny graphs.
inline Hyperparameters default_hyperparameters(int P) {
  if (P < 2) throw ValidationError("default_hyperparameters: P must be at least 2");
  Hyperparameters h;
  h.pi_edge = std::min(2.0 / (P - 1), 0.5);
  return h;
}

}  // namespace verge

#endif  // VERGE_HYPERPARAMS_HPP
