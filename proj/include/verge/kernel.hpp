#ifndef VERGE_KERNEL_HPP
#define VERGE_KERNEL_HPP

#include <Eigen/Cholesky>
#include <cmath>

#include "verge/chain_state.hpp"
#include "verge/common.hpp"
#include "verge/dataset.hpp"
#include "verge/rng.hpp"

namespace verge {

// Weighted squared distances M(i,i') = sum_k -log(rho_k) (Z_ik - Z_i'k)^2.
// Inactive covariates have rho = 1 and drop out.
inline Matrix build_distance_matrix(const Matrix& Z, const KernelParams& p) {
  const int n = static_cast<int>(Z.rows());
  const int K = static_cast<int>(Z.cols());
  Matrix M = Matrix::Zero(n, n);
  for (int k = 0; k < K; ++k) {
    const double w = -std::log(p.rho(k));
    if (w == 0.0) continue;
    const Vector u = Z.col(k);
    Matrix d = u.replicate(1, n) - u.transpose().replicate(n, 1);
    M.noalias() += w * d.cwiseProduct(d);
  }
  return M;
}

inline Matrix cross_distance_matrix(const Matrix& Z_star, const Matrix& Z, const KernelParams& p) {
  const int m = static_cast<int>(Z_star.rows());
  const int n = static_cast<int>(Z.rows());
  Matrix M = Matrix::Zero(m, n);
  for (int k = 0; k < static_cast<int>(Z.cols()); ++k) {
    const double w = -std::log(p.rho(k));
    if (w == 0.0) continue;
    Matrix d = Z_star.col(k).replicate(1, n) - Z.col(k).transpose().replicate(m, 1);
    M.noalias() += w * d.cwiseProduct(d);
  }
  return M;
}

// K = (1/lambda_a) J + (1/lambda_z) exp(-M) + (1/r) I. The nugget keeps the
// matrix positive definite even with duplicate covariate rows.
inline Matrix build_kernel(const Matrix& Z, const KernelParams& p) {
  const int n = static_cast<int>(Z.rows());
  Matrix K = (-build_distance_matrix(Z, p)).array().exp().matrix() / p.lambda_z;
  K.array() += 1.0 / p.lambda_a;
  K.diagonal().array() += 1.0 / p.r;
  return K;
}

// Cross-covariance between held-out and training rows; no nugget off the
// training diagonal.
inline Matrix build_cross_kernel(const Matrix& Z_star, const Matrix& Z, const KernelParams& p) {
  Matrix K = (-cross_distance_matrix(Z_star, Z, p)).array().exp().matrix() / p.lambda_z;
  K.array() += 1.0 / p.lambda_a;
  return K;
}

// log N(y; 0, Sigma) through a Cholesky factorization.
inline double log_mvn_zero(const Vector& y, const Matrix& Sigma) {
  if (!Sigma.allFinite()) throw NumericalError("log_mvn_zero: non-finite covariance");
  Eigen::LLT<Matrix> llt(Sigma);
  if (llt.info() != Eigen::Success)
    throw NumericalError("log_mvn_zero: covariance not positive definite");
  const auto& L = llt.matrixL();
  double logdet = 0.0;
  for (int i = 0; i < Sigma.rows(); ++i) logdet += std::log(L(i, i));
  logdet *= 2.0;
  const Vector z = L.solve(y);
  return -0.5 * (y.size() * kLog2Pi + logdet + z.squaredNorm());
}

// Covariance contribution of one included predictor: D_j K_j D_j with
// D_j = diag(X column j).
inline Matrix predictor_contribution(const Matrix& X, int j, const Matrix& K) {
  const Vector& x = X.col(j);
  return K.cwiseProduct(x * x.transpose());
}

// Marginal likelihood of y with all included coefficient vectors integrated
// out: y ~ N(0, tau2 I + sum_included D_j K_j D_j).
inline double log_marginal_likelihood(const Dataset& data, const ChainState& state) {
  Matrix Sigma = state.tau2 * Matrix::Identity(data.n, data.n);
  for (int j = 0; j < state.P(); ++j) {
    if (state.gamma(j) != 1) continue;
    Sigma.noalias() += predictor_contribution(data.X, j, build_kernel(data.Z, state.kernel_params(j)));
  }
  return log_mvn_zero(data.y, Sigma);
}

// Draws beta_j from its full conditional N(A^{-1} D_j resid / tau2, A^{-1}),
// A = K_j^{-1} + D_j^2 / tau2, where resid excludes predictor j's own fit.
inline Vector sample_beta_conditional(const Dataset& data, const ChainState& state, int j,
                                      Rng& rng) {
  if (state.gamma(j) != 1)
    throw ValidationError("sample_beta_conditional: predictor " + std::to_string(j) +
                          " is not included");
  const int n = data.n;
  Vector resid = data.y;
  for (int l = 0; l < state.P(); ++l) {
    if (l == j || state.gamma(l) != 1) continue;
    resid.noalias() -= data.X.col(l).cwiseProduct(state.beta.row(l).transpose());
  }

  const Matrix K = build_kernel(data.Z, state.kernel_params(j));
  Eigen::LLT<Matrix> llt_k(K);
  if (llt_k.info() != Eigen::Success)
    throw NumericalError("sample_beta_conditional: kernel not positive definite");
  Matrix A = llt_k.solve(Matrix::Identity(n, n));
  A.diagonal().array() += data.X.col(j).array().square() / state.tau2;

  Eigen::LLT<Matrix> llt_a(A);
  if (llt_a.info() != Eigen::Success)
    throw NumericalError("sample_beta_conditional: conditional precision not positive definite");
  const Vector b = data.X.col(j).cwiseProduct(resid) / state.tau2;
  const Vector mean = llt_a.solve(b);
  Vector z(n);
  for (int i = 0; i < n; ++i) z(i) = rng.normal();
  // A = L L^T, so mean + L^{-T} z has covariance A^{-1}.
  return mean + llt_a.matrixU().solve(z);
}

}  // namespace verge

#endif  // VERGE_KERNEL_HPP
