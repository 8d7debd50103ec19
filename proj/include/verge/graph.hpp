#ifndef VERGE_GRAPH_HPP
#define VERGE_GRAPH_HPP

#include <Eigen/Cholesky>
#include <cmath>
#include <vector>

#include "verge/chain_state.hpp"
#include "verge/common.hpp"
#include "verge/hyperparams.hpp"
#include "verge/rng.hpp"

namespace verge {

// Sufficient statistics of the predictor matrix for the precision sampler.
struct GraphScatter {
  Matrix S;  // X^T X
  int n = 0;
};

inline GraphScatter make_scatter(const Matrix& X) {
  GraphScatter sc;
  sc.n = static_cast<int>(X.rows());
  sc.S = X.transpose() * X;
  return sc;
}

// Gibbs update of all edge indicators given omega and gamma. The conditional
// odds come from the unnormalized joint prior, so no normalizing constant is
// ever evaluated:
//   g=1: pi * N(omega_ij; 0, nu1^2) * exp(b_mrf gamma_i gamma_j)
//   g=0: (1-pi) * N(omega_ij; 0, nu0^2)
inline void sample_edge_indicators(ChainState& state, const Hyperparameters& h, Rng& rng) {
  const int P = state.P();
  const double log_pi = std::log(h.pi_edge);
  const double log_1mpi = std::log(1.0 - h.pi_edge);
  for (int i = 0; i < P; ++i) {
    for (int j = i + 1; j < P; ++j) {
      const double w = state.omega(i, j);
      const double lo1 =
          log_pi + log_normal_pdf(w, h.nu1) + h.b_mrf * (state.gamma(i) * state.gamma(j));
      const double lo0 = log_1mpi + log_normal_pdf(w, h.nu0);
      const double p1 = 1.0 / (1.0 + std::exp(lo0 - lo1));
      const int g = rng.bernoulli(p1) ? 1 : 0;
      state.edge(i, j) = g;
      state.edge(j, i) = g;
    }
  }
}

// Block Gibbs update of one precision column/row given the rest of omega, the
// edge indicators, and the scatter matrix. With the column partitioned out,
//   u | rest ~ N(-C s_{-c,c}, C),  C^{-1} = (s_cc + lambda) Omega11^{-1} + diag(1/nu^2),
//   omega_cc = v + u' Omega11^{-1} u,  v ~ Gamma(n/2 + 1, (s_cc + lambda)/2),
// which keeps omega positive definite by construction.
inline void sample_precision_column(const GraphScatter& sc, ChainState& state,
                                    const Hyperparameters& h, int c, Rng& rng) {
  const int P = state.P();
  const double shape = sc.n / 2.0 + 1.0;
  const double rate = (sc.S(c, c) + h.lambda_diag) / 2.0;
  if (P == 1) {
    state.omega(0, 0) = rng.gamma(shape, rate);
    return;
  }

  std::vector<int> idx;
  idx.reserve(P - 1);
  for (int i = 0; i < P; ++i)
    if (i != c) idx.push_back(i);

  const Matrix O11 = state.omega(idx, idx);
  Eigen::LLT<Matrix> llt11(O11);
  if (llt11.info() != Eigen::Success)
    throw NumericalError("sample_precision_column: omega block not positive definite at column " +
                         std::to_string(c));
  const Matrix O11inv = llt11.solve(Matrix::Identity(P - 1, P - 1));

  Matrix Cinv = (sc.S(c, c) + h.lambda_diag) * O11inv;
  Vector s_col(P - 1);
  for (int i = 0; i < P - 1; ++i) {
    const double nu = state.edge(idx[i], c) == 1 ? h.nu1 : h.nu0;
    Cinv(i, i) += 1.0 / (nu * nu);
    s_col(i) = sc.S(idx[i], c);
  }
  Eigen::LLT<Matrix> llt_c(Cinv);
  if (llt_c.info() != Eigen::Success)
    throw NumericalError("sample_precision_column: conditional precision not positive definite");

  const Vector mean = -llt_c.solve(s_col);
  Vector z(P - 1);
  for (int i = 0; i < P - 1; ++i) z(i) = rng.normal();
  const Vector u = mean + llt_c.matrixU().solve(z);
  const double v = rng.gamma(shape, rate);

  for (int i = 0; i < P - 1; ++i) {
    state.omega(idx[i], c) = u(i);
    state.omega(c, idx[i]) = u(i);
  }
  state.omega(c, c) = v + u.dot(llt11.solve(u));
}

// One full graph sweep: every edge indicator first, then every column in
// ascending order, so each column update sees the freshest adjacency.
inline void graph_sweep(const GraphScatter& sc, ChainState& state, const Hyperparameters& h,
                        Rng& rng) {
  sample_edge_indicators(state, h, rng);
  for (int c = 0; c < state.P(); ++c) sample_precision_column(sc, state, h, c, rng);
}

}  // namespace verge

#endif  // VERGE_GRAPH_HPP
