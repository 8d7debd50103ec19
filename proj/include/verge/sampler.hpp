#ifndef VERGE_SAMPLER_HPP
#define VERGE_SAMPLER_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <thread>
#include <vector>

#include "verge/chain_state.hpp"
#include "verge/common.hpp"
#include "verge/dataset.hpp"
#include "verge/graph.hpp"
#include "verge/hyperparams.hpp"
#include "verge/kernel.hpp"
#include "verge/rng.hpp"
#include "verge/trace_io.hpp"

namespace verge {

struct RunConfig {
  long total_iterations = 60000;
  long burn_in = 30000;
  int thin = 5;
  std::uint64_t seed = 1;
  int chains = 1;
  double rho_step_sd = 0.5;    // logit-scale random-walk step for active rho
  double scale_step_sd = 0.3;  // log-scale random-walk step for kernel precisions
  bool flat_likelihood = false;
  bool progress = false;
  std::string state_dump_path;  // written on a numerical fault when non-empty

  void validate() const {
    if (total_iterations < 1)
      throw ValidationError("run config: total_iterations must be positive");
    if (burn_in < 0 || burn_in >= total_iterations)
      throw ValidationError("run config: burn_in must lie in [0, total_iterations)");
    if (thin < 1) throw ValidationError("run config: thin must be at least 1");
    if (chains < 1) throw ValidationError("run config: chains must be at least 1");
    if (!(rho_step_sd > 0.0) || !(scale_step_sd > 0.0))
      throw ValidationError("run config: step sizes must be positive");
  }
};

struct MoveStats {
  long add_proposed = 0, add_accepted = 0;
  long delete_proposed = 0, delete_accepted = 0;
  long keep_proposed = 0, keep_accepted = 0;
  long flip_proposed = 0, flip_accepted = 0;
  long rho_proposed = 0, rho_accepted = 0;
  long scale_proposed = 0, scale_accepted = 0;

  static double rate(long acc, long prop) { return prop == 0 ? 0.0 : double(acc) / prop; }
  double add_rate() const { return rate(add_accepted, add_proposed); }
  double delete_rate() const { return rate(delete_accepted, delete_proposed); }
  double keep_rate() const { return rate(keep_accepted, keep_proposed); }
  double flip_rate() const { return rate(flip_accepted, flip_proposed); }
  double rho_rate() const { return rate(rho_accepted, rho_proposed); }
  double scale_rate() const { return rate(scale_accepted, scale_proposed); }

  MoveStats& operator+=(const MoveStats& o) {
    add_proposed += o.add_proposed;
    add_accepted += o.add_accepted;
    delete_proposed += o.delete_proposed;
    delete_accepted += o.delete_accepted;
    keep_proposed += o.keep_proposed;
    keep_accepted += o.keep_accepted;
    flip_proposed += o.flip_proposed;
    flip_accepted += o.flip_accepted;
    rho_proposed += o.rho_proposed;
    rho_accepted += o.rho_accepted;
    scale_proposed += o.scale_proposed;
    scale_accepted += o.scale_accepted;
    return *this;
  }
};

// log p(gamma_j = 1 | rest) - log p(gamma_j = 0 | rest) under the MRF prior
// p(gamma | G) proportional to exp(a 1'gamma + b sum_{i<k} g_ik gamma_i gamma_k).
// The normalizing constant cancels exactly in the flip ratio.
inline double mrf_log_prior_ratio_flip(const IntVector& gamma, const IntMatrix& edge, int j,
                                       const Hyperparameters& h) {
  double coupled = 0.0;
  for (int k = 0; k < gamma.size(); ++k) {
    if (k == j) continue;
    coupled += edge(j, k) * gamma(k);
  }
  return h.a_mrf + h.b_mrf * coupled;
}

inline KernelParams draw_prior_kernel_params(const Hyperparameters& h, int K, Rng& rng) {
  KernelParams p;
  p.gamma_tilde.resize(K);
  p.rho.resize(K);
  for (int k = 0; k < K; ++k) {
    if (rng.bernoulli(h.alpha_cov)) {
      p.gamma_tilde[k] = 1;
      p.rho(k) = std::clamp(rng.uniform(), kRhoFloor, kRhoCeil);
    } else {
      p.gamma_tilde[k] = 0;
      p.rho(k) = 1.0;
    }
  }
  p.lambda_a = rng.gamma(h.a_lambda, h.b_lambda);
  p.lambda_z = rng.gamma(h.a_z, h.b_z);
  p.r = rng.gamma(h.a_r, h.b_r);
  return p;
}

// Marginal-likelihood evaluator. Caches each included predictor's kernel
// matrix (they change only when that predictor's parameters change) but
// assembles and factorizes Sigma from scratch on every evaluation, so a
// Delete followed by an Add with identical parameters restores the value
// bit-exactly and there is no incremental drift. In flat mode every
// log-likelihood is 0 and no matrix work happens.
class LikelihoodCache {
 public:
  LikelihoodCache(const Dataset& data, bool flat) : data_(&data), flat_(flat) {
    kernels_.resize(data.P);
    has_.assign(data.P, 0);
  }

  void rebuild(const ChainState& state) {
    for (int j = 0; j < state.P(); ++j) {
      if (state.gamma(j) == 1 && !flat_) {
        kernels_[j] = build_kernel(data_->Z, state.kernel_params(j));
        has_[j] = 1;
      } else {
        has_[j] = state.gamma(j) == 1 ? 1 : 0;
        kernels_[j].resize(0, 0);
      }
    }
    ll_ = flat_ ? 0.0 : assemble_loglik(-1, nullptr, state.tau2);
  }

  double loglik() const { return ll_; }

  // Candidate log-likelihood with predictor j's kernel replaced by K_new
  // (nullptr drops the predictor). commit() adopts the pending candidate.
  double eval_replace(int j, const Matrix* K_new, double tau2) {
    pending_j_ = j;
    pending_include_ = K_new != nullptr;
    if (flat_) {
      pending_ll_ = 0.0;
      return 0.0;
    }
    pending_kernel_ = K_new ? *K_new : Matrix();
    pending_ll_ = assemble_loglik(j, K_new, tau2);
    return pending_ll_;
  }

  void commit() {
    has_[pending_j_] = pending_include_ ? 1 : 0;
    kernels_[pending_j_] = pending_include_ && !flat_ ? std::move(pending_kernel_) : Matrix();
    ll_ = pending_ll_;
  }

  void refresh_tau2(double tau2) {
    if (!flat_) ll_ = assemble_loglik(-1, nullptr, tau2);
  }

  // From-scratch evaluation over the cached kernels; `replace_j` >= 0 swaps
  // that predictor's contribution for K_new (nullptr removes it).
  double assemble_loglik(int replace_j, const Matrix* K_new, double tau2) const {
    Matrix Sigma = tau2 * Matrix::Identity(data_->n, data_->n);
    for (int l = 0; l < static_cast<int>(has_.size()); ++l) {
      if (l == replace_j) {
        if (K_new) Sigma.noalias() += predictor_contribution(data_->X, l, *K_new);
      } else if (has_[l]) {
        Sigma.noalias() += predictor_contribution(data_->X, l, kernels_[l]);
      }
    }
    return log_mvn_zero(data_->y, Sigma);
  }

  bool flat() const { return flat_; }

 private:
  const Dataset* data_;
  bool flat_;
  std::vector<Matrix> kernels_;
  std::vector<char> has_;
  double ll_ = 0.0;
  int pending_j_ = -1;
  bool pending_include_ = false;
  Matrix pending_kernel_;
  double pending_ll_ = 0.0;
};

namespace detail {

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double inv_logit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

namespace detail {

// Move-kind weights Add 0.4 / Delete 0.4 / Keep 0.2, renormalized over the
// applicable kinds: Add needs an excluded predictor, Delete and Keep need an
// included one.
inline void move_kind_probs(int n_in, int P, double& p_add, double& p_del, double& p_keep) {
  const double w_add = n_in < P ? 0.4 : 0.0;
  const double w_del = n_in >= 1 ? 0.4 : 0.0;
  const double w_keep = n_in >= 1 ? 0.2 : 0.0;
  const double w = w_add + w_del + w_keep;
  p_add = w_add / w;
  p_del = w_del / w;
  p_keep = w_keep / w;
}

inline double log_add_prob(int n_in, int P) {
  double pa, pd, pk;
  move_kind_probs(n_in, P, pa, pd, pk);
  return std::log(pa) - std::log(double(P - n_in));
}

inline double log_del_prob(int n_in, int P) {
  double pa, pd, pk;
  move_kind_probs(n_in, P, pa, pd, pk);
  return std::log(pd) - std::log(double(n_in));
}

}  // namespace detail

// One Add / Delete / Keep proposal on the predictor inclusion structure.
// Kinds carry weights 0.4/0.4/0.2 renormalized over the applicable ones; the
// target predictor is uniform within its kind. Fresh kernel parameters always
// come from the prior, so those terms cancel in the acceptance ratio, leaving
// the marginal-likelihood difference, the MRF flip ratio (Add/Delete only),
// and the dimension-matching proposal correction q(reverse)/q(forward).
inline void between_model_move(const Dataset& data, ChainState& state, const Hyperparameters& h,
                               const RunConfig& cfg, LikelihoodCache& cache, MoveStats& stats,
                               Rng& rng) {
  const int P = state.P();
  const int n_in = state.n_included();
  double p_add, p_del, p_keep;
  detail::move_kind_probs(n_in, P, p_add, p_del, p_keep);
  const double u = rng.uniform();

  if (u < p_keep) {
    // Keep: refresh one included predictor's kernel block from the prior.
    const auto included = state.included();
    const int j = included[rng.uniform_int(n_in)];
    const KernelParams prop = draw_prior_kernel_params(h, state.K(), rng);
    Matrix K_new;
    const Matrix* Kp = nullptr;
    if (!cache.flat()) {
      K_new = build_kernel(data.Z, prop);
      Kp = &K_new;
    }
    const double cand_ll = cache.eval_replace(j, Kp, state.tau2);
    ++stats.keep_proposed;
    if (std::log(rng.uniform()) < cand_ll - cache.loglik()) {
      ++stats.keep_accepted;
      state.set_kernel_params(j, prop);
      cache.commit();
    }
    return;
  }

  if (u < p_keep + p_add) {
    // Add: uniform over excluded predictors.
    int pick = rng.uniform_int(P - n_in);
    int j = -1;
    for (int l = 0; l < P; ++l) {
      if (state.gamma(l) == 0 && pick-- == 0) {
        j = l;
        break;
      }
    }
    const KernelParams prop = draw_prior_kernel_params(h, state.K(), rng);
    Matrix K_new;
    const Matrix* Kp = nullptr;
    if (!cache.flat()) {
      K_new = build_kernel(data.Z, prop);
      Kp = &K_new;
    }
    const double cand_ll = cache.eval_replace(j, Kp, state.tau2);
    const double log_acc = (cand_ll - cache.loglik()) +
                           mrf_log_prior_ratio_flip(state.gamma, state.edge, j, h) +
                           detail::log_del_prob(n_in + 1, P) - detail::log_add_prob(n_in, P);
    ++stats.add_proposed;
    if (std::log(rng.uniform()) < log_acc) {
      ++stats.add_accepted;
      state.gamma(j) = 1;
      state.set_kernel_params(j, prop);
      cache.commit();
    }
    return;
  }

  // Delete: uniform over included predictors.
  const auto included = state.included();
  const int j = included[rng.uniform_int(n_in)];
  const double cand_ll = cache.eval_replace(j, nullptr, state.tau2);
  const double log_acc = (cand_ll - cache.loglik()) -
                         mrf_log_prior_ratio_flip(state.gamma, state.edge, j, h) +
                         detail::log_add_prob(n_in - 1, P) - detail::log_del_prob(n_in, P);
  ++stats.delete_proposed;
  if (std::log(rng.uniform()) < log_acc) {
    ++stats.delete_accepted;
    state.gamma(j) = 0;
    state.reset_kernel_params(j);
    state.beta.row(j).setZero();
    cache.commit();
  }
}

// Within-model refresh of one included predictor's kernel block, three
// Metropolis stages: flip one covariate indicator (fresh rho from U(0,1) on
// activation), a joint logit-scale walk on the active rhos, and a joint
// log-scale walk on the three precisions. Uniform prior and proposal
// densities cancel where they appear; the Jacobians of the logit/log
// transforms and the gamma priors do not, and are included.
inline void within_model_covariate_move(const Dataset& data, ChainState& state,
                                        const Hyperparameters& h, const RunConfig& cfg,
                                        LikelihoodCache& cache, MoveStats& stats, int j,
                                        Rng& rng) {
  if (state.gamma(j) != 1)
    throw ValidationError("within_model_covariate_move: predictor " + std::to_string(j) +
                          " is not included");
  const int K = state.K();
  KernelParams cur = state.kernel_params(j);

  auto try_stage = [&](const KernelParams& prop, double log_prior_ratio) -> bool {
    Matrix K_new;
    const Matrix* Kp = nullptr;
    if (!cache.flat()) {
      K_new = build_kernel(data.Z, prop);
      Kp = &K_new;
    }
    const double cand_ll = cache.eval_replace(j, Kp, state.tau2);
    const double log_acc = (cand_ll - cache.loglik()) + log_prior_ratio;
    if (std::log(rng.uniform()) < log_acc) {
      state.set_kernel_params(j, prop);
      cache.commit();
      return true;
    }
    return false;
  };

  // Stage 1: indicator flip.
  {
    const int k = rng.uniform_int(K);
    KernelParams prop = cur;
    double lr;
    if (cur.gamma_tilde[k] == 0) {
      prop.gamma_tilde[k] = 1;
      prop.rho(k) = std::clamp(rng.uniform(), kRhoFloor, kRhoCeil);
      lr = std::log(h.alpha_cov) - std::log(1.0 - h.alpha_cov);
    } else {
      prop.gamma_tilde[k] = 0;
      prop.rho(k) = 1.0;
      lr = std::log(1.0 - h.alpha_cov) - std::log(h.alpha_cov);
    }
    ++stats.flip_proposed;
    if (try_stage(prop, lr)) {
      ++stats.flip_accepted;
      cur = prop;
    }
  }

  // Stage 2: logit-scale walk on active rhos.
  {
    std::vector<int> active;
    for (int k = 0; k < K; ++k)
      if (cur.gamma_tilde[k] == 1) active.push_back(k);
    if (!active.empty()) {
      KernelParams prop = cur;
      double jac = 0.0;
      for (int k : active) {
        const double x = detail::logit(cur.rho(k)) + cfg.rho_step_sd * rng.normal();
        const double rho_new = std::clamp(detail::inv_logit(x), kRhoFloor, kRhoCeil);
        prop.rho(k) = rho_new;
        // d rho / d logit(rho) = rho (1 - rho); the U(0,1) prior is flat.
        jac += std::log(rho_new * (1.0 - rho_new)) - std::log(cur.rho(k) * (1.0 - cur.rho(k)));
      }
      ++stats.rho_proposed;
      if (try_stage(prop, jac)) {
        ++stats.rho_accepted;
        cur = prop;
      }
    }
  }

  // Stage 3: log-scale walk on lambda_a, lambda_z, r with Gamma priors.
  {
    KernelParams prop = cur;
    double lr = 0.0;
    auto walk = [&](double x, double a, double b, double& out) {
      const double w = std::log(x);
      const double w_new = w + cfg.scale_step_sd * rng.normal();
      out = std::exp(w_new);
      // Gamma(a, b) density in log coordinates: a w - b e^w + const.
      lr += a * (w_new - w) - b * (out - x);
    };
    walk(cur.lambda_a, h.a_lambda, h.b_lambda, prop.lambda_a);
    walk(cur.lambda_z, h.a_z, h.b_z, prop.lambda_z);
    walk(cur.r, h.a_r, h.b_r, prop.r);
    ++stats.scale_proposed;
    if (try_stage(prop, lr)) ++stats.scale_accepted;
  }
}

// Conjugate draw of the noise variance given the sampled coefficient curves:
// tau2 ~ InvGamma(a0 + n/2, b0 + RSS/2).
inline void update_tau2(const Dataset& data, ChainState& state, const Hyperparameters& h,
                        Rng& rng) {
  Vector resid = data.y;
  for (int j = 0; j < state.P(); ++j) {
    if (state.gamma(j) != 1) continue;
    resid.noalias() -= data.X.col(j).cwiseProduct(state.beta.row(j).transpose());
  }
  const double rss = resid.squaredNorm();
  state.tau2 = rng.inverse_gamma(h.a0 + data.n / 2.0, h.b0 + rss / 2.0);
}

class ChainRunner {
 public:
  ChainRunner(const Dataset& data, const Hyperparameters& h, const RunConfig& cfg,
              std::uint64_t chain_seed, int chain_index)
      : data_(&data),
        hyper_(h),
        cfg_(cfg),
        rng_(chain_seed),
        chain_index_(chain_index),
        chain_seed_(chain_seed),
        state_(ChainState::initial(data.P, data.K, data.n)),
        cache_(data, cfg.flat_likelihood) {
    h.validate();
    cfg.validate();
    // Flat mode is a prior-recovery diagnostic: the graph likelihood is
    // silenced too (S = 0, n = 0) so every latent block samples its prior.
    if (cfg.flat_likelihood) {
      scatter_.S = Matrix::Zero(data.P, data.P);
      scatter_.n = 0;
    } else {
      scatter_ = make_scatter(data.X);
    }
    cache_.rebuild(state_);
  }

  // One full sweep: graph, between-model move, per-included-predictor
  // within-model move and coefficient draw, then the noise variance.
  void iterate() {
    ++iteration_;
    graph_sweep(scatter_, state_, hyper_, rng_);
    between_model_move(*data_, state_, hyper_, cfg_, cache_, stats_, rng_);
    if (!cfg_.flat_likelihood) {
      for (int j : state_.included()) {
        within_model_covariate_move(*data_, state_, hyper_, cfg_, cache_, stats_, j, rng_);
        state_.beta.row(j) = sample_beta_conditional(*data_, state_, j, rng_).transpose();
      }
      update_tau2(*data_, state_, hyper_, rng_);
      cache_.refresh_tau2(state_.tau2);
    } else {
      for (int j : state_.included())
        within_model_covariate_move(*data_, state_, hyper_, cfg_, cache_, stats_, j, rng_);
    }
  }

  Trace run() {
    Trace trace;
    trace.meta.n = data_->n;
    trace.meta.P = data_->P;
    trace.meta.K = data_->K;
    trace.meta.total_iterations = cfg_.total_iterations;
    trace.meta.burn_in = cfg_.burn_in;
    trace.meta.thin = cfg_.thin;
    trace.meta.seed = chain_seed_;
    trace.meta.chain = chain_index_;
    trace.records.reserve((cfg_.total_iterations - cfg_.burn_in) / cfg_.thin);

    while (iteration_ < cfg_.total_iterations) {
      try {
        iterate();
      } catch (const NumericalError& e) {
        handle_fault(e);
      }
      if (iteration_ > cfg_.burn_in && (iteration_ - cfg_.burn_in) % cfg_.thin == 0)
        trace.records.push_back(record());
      if (cfg_.progress && iteration_ % 1000 == 0) print_progress();
    }
    return trace;
  }

  const ChainState& state() const { return state_; }
  ChainState& state() { return state_; }
  const LikelihoodCache& cache() const { return cache_; }
  LikelihoodCache& cache() { return cache_; }
  const MoveStats& stats() const { return stats_; }
  Rng& rng() { return rng_; }
  long iteration() const { return iteration_; }

 private:
  TraceRecord record() const {
    TraceRecord rec;
    rec.iteration = iteration_;
    rec.tau2 = state_.tau2;
    rec.included = state_.included();
    for (int j : rec.included) {
      rec.params.push_back(state_.kernel_params(j));
      rec.beta.push_back(state_.beta.row(j).transpose());
    }
    rec.edges = state_.edges();
    return rec;
  }

  void print_progress() const {
    std::fprintf(stderr,
                 "[chain %d] iter %ld/%ld included=%d edges=%d tau2=%.3f "
                 "acc add=%.1f%% del=%.1f%% keep=%.1f%% flip=%.1f%% rho=%.1f%% scale=%.1f%%\n",
                 chain_index_, iteration_, cfg_.total_iterations, state_.n_included(),
                 state_.n_edges(), state_.tau2, 100.0 * stats_.add_rate(),
                 100.0 * stats_.delete_rate(), 100.0 * stats_.keep_rate(),
                 100.0 * stats_.flip_rate(), 100.0 * stats_.rho_rate(),
                 100.0 * stats_.scale_rate());
  }

  [[noreturn]] void handle_fault(const NumericalError& e) {
    if (!cfg_.state_dump_path.empty()) write_state_dump(state_, iteration_, cfg_.state_dump_path);
    throw NumericalError(
        "chain " + std::to_string(chain_index_) + " iteration " + std::to_string(iteration_) +
        ": " + e.what() +
        (cfg_.state_dump_path.empty() ? "" : "; state dumped to " + cfg_.state_dump_path));
  }

  const Dataset* data_;
  Hyperparameters hyper_;
  RunConfig cfg_;
  Rng rng_;
  int chain_index_;
  std::uint64_t chain_seed_;
  GraphScatter scatter_;
  ChainState state_;
  LikelihoodCache cache_;
  MoveStats stats_;
  long iteration_ = 0;
};

struct ChainResult {
  Trace trace;
  MoveStats stats;
};

inline ChainResult run_chain(const Dataset& data, const Hyperparameters& h, const RunConfig& cfg,
                             int chain_index = 1) {
  ChainRunner runner(data, h, cfg, derive_seed(cfg.seed, static_cast<std::uint64_t>(chain_index)),
                     chain_index);
  ChainResult res;
  res.trace = runner.run();
  res.stats = runner.stats();
  return res;
}

// Runs cfg.chains chains with seeds derived from the master seed. Results are
// ordered by chain index regardless of worker scheduling.
inline std::vector<ChainResult> run_chains(const Dataset& data, const Hyperparameters& h,
                                           const RunConfig& cfg, int workers = 1) {
  const int C = cfg.chains;
  std::vector<ChainResult> results(C);
  if (workers <= 1 || C == 1) {
    for (int c = 0; c < C; ++c) results[c] = run_chain(data, h, cfg, c + 1);
    return results;
  }
  std::vector<std::exception_ptr> errors(C);
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  const int T = std::min(workers, C);
  for (int t = 0; t < T; ++t) {
    pool.emplace_back([&]() {
      for (int c = next.fetch_add(1); c < C; c = next.fetch_add(1)) {
        try {
          results[c] = run_chain(data, h, cfg, c + 1);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& ep : errors)
    if (ep) std::rethrow_exception(ep);
  return results;
}

}  // namespace verge

#endif  // VERGE_SAMPLER_HPP
