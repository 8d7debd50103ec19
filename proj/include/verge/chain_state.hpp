#ifndef VERGE_CHAIN_STATE_HPP
#define VERGE_CHAIN_STATE_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "verge/common.hpp"

namespace verge {

// Active rho values are kept strictly inside (0, 1); rho = 1 is reserved for
// inactive covariates where the kernel ignores the dimension.
constexpr double kRhoFloor = 1e-6;
constexpr double kRhoCeil = 1.0 - 1e-12;

// Kernel configuration of one predictor's varying coefficient.
struct KernelParams {
  std::vector<int> gamma_tilde;  // K covariate-inclusion indicators
  Vector rho;                    // K, in (0,1); exactly 1 iff the indicator is 0
  double lambda_a = 1.0;         // precision of the constant (intercept) component
  double lambda_z = 1.0;         // precision of the smooth deviation component
  double r = 1.0;                // nugget precision

  void validate() const {
    const int K = static_cast<int>(gamma_tilde.size());
    if (static_cast<int>(rho.size()) != K)
      throw ValidationError("kernel params: rho and gamma_tilde length mismatch");
    for (int k = 0; k < K; ++k) {
      if (gamma_tilde[k] != 0 && gamma_tilde[k] != 1)
        throw ValidationError("kernel params: gamma_tilde must be 0/1");
      if (gamma_tilde[k] == 0) {
        if (rho(k) != 1.0)
          throw ValidationError("kernel params: rho must be exactly 1 for inactive covariate " +
                                std::to_string(k));
      } else if (!(rho(k) > 0.0 && rho(k) < 1.0)) {
        throw ValidationError("kernel params: active rho must lie in (0, 1) at covariate " +
                              std::to_string(k));
      }
    }
    if (!(lambda_a > 0.0) || !(lambda_z > 0.0) || !(r > 0.0))
      throw ValidationError("kernel params: precisions must be positive");
  }
};

struct ChainState {
  IntVector gamma;        // P predictor-inclusion indicators
  IntMatrix gamma_tilde;  // P x K covariate-inclusion indicators
  Matrix rho;             // P x K
  Vector lambda_a;        // P
  Vector lambda_z;        // P
  Vector r;               // P
  Matrix omega;           // P x P precision matrix, symmetric positive definite
  IntMatrix edge;         // P x P symmetric 0/1 adjacency, zero diagonal
  double tau2 = 1.0;      // noise variance
  Matrix beta;            // P x n sampled coefficient vectors, zero rows when excluded

  static ChainState initial(int P, int K, int n) {
    ChainState s;
    s.gamma = IntVector::Zero(P);
    s.gamma_tilde = IntMatrix::Zero(P, K);
    s.rho = Matrix::Ones(P, K);
    s.lambda_a = Vector::Ones(P);
    s.lambda_z = Vector::Ones(P);
    s.r = Vector::Ones(P);
    s.omega = Matrix::Identity(P, P);
    s.edge = IntMatrix::Zero(P, P);
    s.tau2 = 1.0;
    s.beta = Matrix::Zero(P, n);
    return s;
  }

  int P() const { return static_cast<int>(gamma.size()); }
  int K() const { return static_cast<int>(gamma_tilde.cols()); }

  KernelParams kernel_params(int j) const {
    KernelParams p;
    const int k = K();
    p.gamma_tilde.resize(k);
    for (int i = 0; i < k; ++i) p.gamma_tilde[i] = gamma_tilde(j, i);
    p.rho = rho.row(j).transpose();
    p.lambda_a = lambda_a(j);
    p.lambda_z = lambda_z(j);
    p.r = r(j);
    return p;
  }

  void set_kernel_params(int j, const KernelParams& p) {
    for (int i = 0; i < K(); ++i) gamma_tilde(j, i) = p.gamma_tilde[i];
    rho.row(j) = p.rho.transpose();
    lambda_a(j) = p.lambda_a;
    lambda_z(j) = p.lambda_z;
    r(j) = p.r;
  }

  // Resets one predictor's kernel block to the canonical excluded configuration.
  void reset_kernel_params(int j) {
    gamma_tilde.row(j).setZero();
    rho.row(j).setOnes();
    lambda_a(j) = 1.0;
    lambda_z(j) = 1.0;
    r(j) = 1.0;
  }

  std::vector<int> included() const {
    std::vector<int> out;
    for (int j = 0; j < P(); ++j)
      if (gamma(j) == 1) out.push_back(j);
    return out;
  }

  int n_included() const {
    int c = 0;
    for (int j = 0; j < P(); ++j) c += gamma(j);
    return c;
  }

  // Unordered edge set as sorted (i, j) pairs with i < j.
  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < P(); ++i)
      for (int j = i + 1; j < P(); ++j)
        if (edge(i, j) == 1) out.emplace_back(i, j);
    return out;
  }

  int n_edges() const {
    int c = 0;
    for (int i = 0; i < P(); ++i)
      for (int j = i + 1; j < P(); ++j) c += edge(i, j);
    return c;
  }

  void validate() const {
    const int p = P();
    if (gamma_tilde.rows() != p || rho.rows() != p || lambda_a.size() != p ||
        lambda_z.size() != p || r.size() != p || omega.rows() != p || omega.cols() != p ||
        edge.rows() != p || edge.cols() != p || beta.rows() != p)
      throw ValidationError("chain state: inconsistent dimensions");
    if (!(tau2 > 0.0)) throw ValidationError("chain state: tau2 must be positive");
    for (int j = 0; j < p; ++j) {
      if (gamma(j) != 0 && gamma(j) != 1)
        throw ValidationError("chain state: gamma must be 0/1");
      if (gamma(j) == 0 && beta.row(j).cwiseAbs().maxCoeff() != 0.0)
        throw ValidationError("chain state: beta row must be zero for excluded predictor " +
                              std::to_string(j));
      kernel_params(j).validate();
    }
    for (int i = 0; i < p; ++i) {
      if (edge(i, i) != 0) throw ValidationError("chain state: adjacency diagonal must be zero");
      for (int j = 0; j < p; ++j) {
        if (edge(i, j) != edge(j, i))
          throw ValidationError("chain state: adjacency must be symmetric");
        if (omega(i, j) != omega(j, i))
          throw ValidationError("chain state: omega must be symmetric");
      }
    }
  }
};

// One retained posterior draw. Kernel parameters and beta are stored only for
// the predictors included at that iteration, parallel to `included`.
struct TraceRecord {
  long iteration = 0;
  double tau2 = 1.0;
  std::vector<int> included;
  std::vector<KernelParams> params;
  std::vector<Vector> beta;
  std::vector<std::pair<int, int>> edges;
};

struct TraceMeta {
  int n = 0;
  int P = 0;
  int K = 0;
  long total_iterations = 0;
  long burn_in = 0;
  int thin = 1;
  std::uint64_t seed = 0;
  int chain = 1;
};

struct Trace {
  TraceMeta meta;
  std::vector<TraceRecord> records;
};

}  // namespace verge

#endif  // VERGE_CHAIN_STATE_HPP
