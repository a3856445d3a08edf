#ifndef FDPE_SOLVER_HPP
#define FDPE_SOLVER_HPP

#include "fdpe/core.hpp"
#include "fdpe/estimators.hpp"
#include "fdpe/network.hpp"
#include "fdpe/oracle.hpp"

#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace fdpe {

template <typename Scalar = double>
struct SolverConfig {
  Scalar mu_theta = 1;
  Scalar mu_omega = 1;
  Scalar eta = 0;
  TraceParams<Scalar> trace;
  /// Number of mini-batches per epoch.
  Index J = 1;
  /// Agent weights; empty means 1/K each.
  std::vector<Scalar> taus;
  /// Prior vector; empty means zero.
  Vector<Scalar> theta_p;
  UMode u_mode = UMode::identity;
  long max_epochs = 1000;
  /// Stop once the consensus gap and the mean empirical error both fall below tol.
  Scalar tol = 0;
  std::uint64_t seed = 0;
  /// Baseline schedule mu / (1 + decay e); 0 disables the decay.
  Scalar decay = Scalar(0.01);
  Scalar divergence_factor = Scalar(1e6);
};

/// Per-agent iterates. `z` stacks [theta; omega].
template <typename Scalar = double>
struct AgentState {
  Vector<Scalar> z;
  Vector<Scalar> psi_prev;
  Vector<Scalar> g;
  Vector<Scalar> g_next;
  Vector<Scalar> snapshot;
  /// False until the first epoch ends; snapshot gradients count as zero before.
  bool snapshot_active = false;
  std::vector<Index> perm;
  long grad_evals = 0;

  Index dim() const { return z.size() / 2; }
  auto theta() const { return z.head(dim()); }
  auto omega() const { return z.tail(dim()); }
};

template <typename Scalar>
AgentState<Scalar> make_state(const Vector<Scalar>& z) {
  AgentState<Scalar> s;
  s.z = z;
  s.psi_prev = z;
  s.g = Vector<Scalar>::Zero(z.size());
  s.g_next = Vector<Scalar>::Zero(z.size());
  s.snapshot = z;
  return s;
}

template <typename Scalar = double>
struct TraceRecord {
  long epoch = 0;
  Index agent = 0;
  Scalar emp_error = 0;
  Scalar consensus_gap = 0;
  Scalar msd = 0;
  long grad_evals = 0;
  long comm_rounds = 0;
};

template <typename Scalar = double>
struct GateReport {
  Scalar ratio = 0;       // mu_omega / mu_theta
  Scalar rhs = 0;         // right-hand side of the sufficient condition
  Scalar ratio_min = 0;   // smallest ratio that satisfies it
  Scalar lambda_max_U = 0;
  Scalar lambda_max_C = 0;
  Scalar lambda_max_ACA = 0;  // lambda_max(A C^{-1} A^T)
  bool pass = false;
};

template <typename Scalar = double>
struct Trace {
  std::string algorithm;
  std::vector<TraceRecord<Scalar>> records;
  SaddlePoint<Scalar> target;
  GateReport<Scalar> gate;
  bool converged = false;
  long epochs = 0;
  long comm_rounds = 0;
  std::vector<AgentState<Scalar>> final_states;

  /// Mean over agents of the empirical error, one entry per recorded epoch.
  std::vector<Scalar> mean_error() const {
    std::vector<Scalar> out;
    std::vector<Index> counts;
    for (const auto& r : records) {
      const auto e = static_cast<std::size_t>(r.epoch);
      if (out.size() <= e) {
        out.resize(e + 1, Scalar(0));
        counts.resize(e + 1, 0);
      }
      out[e] += r.emp_error;
      ++counts[e];
    }
    for (std::size_t e = 0; e < out.size(); ++e)
      if (counts[e] > 0) out[e] /= static_cast<Scalar>(counts[e]);
    return out;
  }

  Scalar final_mean_error() const {
    const auto m = mean_error();
    return m.empty() ? Scalar(0) : m.back();
  }
};

/// Called after every iteration with (epoch, iteration within epoch, states).
template <typename Scalar>
using Observer = std::function<void(long, Index, const std::vector<AgentState<Scalar>>&)>;

template <typename Scalar = double>
struct RunOptions {
  /// Starting states; empty means theta = omega = 0 for every agent.
  std::vector<AgentState<Scalar>> initial;
  /// Reference for the mean square deviation column; empty leaves it NaN.
  Vector<Scalar> theta_star;
  Observer<Scalar> observer;
};

// ---------------------------------------------------------------------------
// Step-size gate.

template <typename Scalar>
GateReport<Scalar> check_step_sizes(Scalar mu_theta, Scalar mu_omega, Scalar eta,
                                    const EstimateSet<Scalar>& agg) {
  GateReport<Scalar> r;
  r.ratio = mu_omega / mu_theta;
  r.lambda_max_U = lambda_max_symmetric(agg.U);
  r.lambda_max_C = lambda_max_symmetric(agg.C);
  const Matrix<Scalar> CinvAt = solve_checked<Scalar>(agg.C, agg.A.transpose(), "gate: C^{-1} A^T");
  r.lambda_max_ACA = lambda_max_symmetric(Matrix<Scalar>(agg.A * CinvAt));
  const Scalar e = eta * r.lambda_max_U / r.lambda_max_C;
  const Scalar q = r.lambda_max_ACA / r.lambda_max_C;
  r.rhs = e + Scalar(2) * std::sqrt(r.ratio * q);
  r.pass = r.ratio > r.rhs;
  const Scalar root = std::sqrt(q) + std::sqrt(q + e);
  r.ratio_min = root * root;
  return r;
}

template <typename Scalar>
GateReport<Scalar> check_step_sizes(const SolverConfig<Scalar>& cfg, const EstimateSet<Scalar>& agg) {
  return check_step_sizes(cfg.mu_theta, cfg.mu_omega, cfg.eta, agg);
}

/// Baseline step size at epoch e: mu / (1 + decay e).
template <typename Scalar>
Scalar decayed_step(Scalar mu, Scalar decay, long epoch) {
  return decay > 0 ? mu / (Scalar(1) + decay * static_cast<Scalar>(epoch)) : mu;
}

// ---------------------------------------------------------------------------
// Gradients.

template <typename Scalar>
Vector<Scalar> local_gradient(const Vector<Scalar>& z, const EstimateSet<Scalar>& est, Scalar eta,
                              const Vector<Scalar>& theta_p) {
  const Index M = est.dim();
  return local_gradient(Vector<Scalar>(z.head(M)), Vector<Scalar>(z.tail(M)), est, eta, theta_p);
}

/// Mean per-sample gradient over bank rows [lo, lo+len).
template <typename Scalar>
Vector<Scalar> minibatch_gradient(const SampleBank<Scalar>& bank, const Vector<Scalar>& z, Index lo,
                                  Index len, Scalar eta, const Vector<Scalar>& theta_p,
                                  UMode mode) {
  const Index M = bank.dim();
  const auto X = bank.x->middleRows(lo, len);
  const auto Y = bank.y->middleRows(lo, len);
  const auto theta = z.head(M);
  const auto omega = z.tail(M);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(len);
  const Vector<Scalar> x_omega = X * omega;
  Vector<Scalar> out(2 * M);
  if (mode == UMode::identity) {
    out.head(M) = eta * (theta - theta_p);
  } else {
    const Vector<Scalar> x_diff = X * (theta - theta_p);
    out.head(M).noalias() = (eta * inv) * (X.transpose() * x_diff);
  }
  out.head(M).noalias() -= inv * (Y.transpose() * x_omega);
  const Vector<Scalar> inner = Y * theta - bank.c.segment(lo, len) + x_omega;
  out.tail(M).noalias() = inv * (X.transpose() * inner);
  return out;
}

template <typename Scalar>
Scalar consensus_gap(const std::vector<AgentState<Scalar>>& states) {
  require(!states.empty(), ErrorCode::invalid_argument, "consensus_gap: no agents");
  const Index M = states.front().dim();
  Vector<Scalar> mean = Vector<Scalar>::Zero(M);
  for (const auto& s : states) mean += s.theta();
  mean /= static_cast<Scalar>(states.size());
  Scalar gap = 0;
  for (const auto& s : states) gap = std::max(gap, (s.theta() - mean).norm());
  return gap;
}

template <typename Scalar>
Scalar consensus_gap(const std::vector<Vector<Scalar>>& thetas) {
  require(!thetas.empty(), ErrorCode::invalid_argument, "consensus_gap: no agents");
  Vector<Scalar> mean = Vector<Scalar>::Zero(thetas.front().size());
  for (const auto& t : thetas) mean += t;
  mean /= static_cast<Scalar>(thetas.size());
  Scalar gap = 0;
  for (const auto& t : thetas) gap = std::max(gap, (t - mean).norm());
  return gap;
}

/// Contiguous mini-batch ranges of size ceil(n/J); the last may be short.
inline std::vector<std::pair<Index, Index>> minibatches(Index n, Index J) {
  require(J >= 1, ErrorCode::invalid_argument, "minibatches: J must be positive");
  require(n >= J, ErrorCode::insufficient_data,
          "minibatches: fewer usable samples than mini-batches");
  const Index size = (n + J - 1) / J;
  std::vector<std::pair<Index, Index>> out;
  for (Index j = 0; j < J; ++j) {
    const Index lo = j * size;
    const Index len = std::min(size, n - lo);
    require(len > 0, ErrorCode::invalid_argument,
            "minibatches: J=" + std::to_string(J) + " leaves an empty batch for " +
                std::to_string(n) + " samples");
    out.emplace_back(lo, len);
  }
  return out;
}

namespace detail {

template <typename Scalar>
std::vector<Scalar> resolve_taus(const SolverConfig<Scalar>& cfg, Index K) {
  if (cfg.taus.empty()) return std::vector<Scalar>(static_cast<std::size_t>(K), Scalar(1) / Scalar(K));
  require(static_cast<Index>(cfg.taus.size()) == K, ErrorCode::config,
          "solver: taus has " + std::to_string(cfg.taus.size()) + " entries for " +
              std::to_string(K) + " agents");
  for (Scalar t : cfg.taus)
    require(t > 0, ErrorCode::config, "solver: agent weights must be positive");
  return cfg.taus;
}

template <typename Scalar>
Vector<Scalar> resolve_prior(const SolverConfig<Scalar>& cfg, Index M) {
  if (cfg.theta_p.size() == 0) return Vector<Scalar>::Zero(M);
  require(cfg.theta_p.size() == M, ErrorCode::config, "solver: theta_p has the wrong length");
  return cfg.theta_p;
}

template <typename Scalar>
void check_config(const SolverConfig<Scalar>& cfg) {
  require(cfg.mu_theta > 0 && cfg.mu_omega > 0, ErrorCode::config, "solver: step sizes must be positive");
  require(cfg.eta >= 0, ErrorCode::config, "solver: eta must be non-negative");
  require(cfg.max_epochs >= 0, ErrorCode::config, "solver: max_epochs must be non-negative");
}

/// Shared driver state for one run.
template <typename Scalar>
struct Run {
  const Topology<Scalar>& topo;
  std::vector<Scalar> taus;
  Vector<Scalar> theta_p;
  SaddlePoint<Scalar> target;
  Vector<Scalar> theta_star;
  Scalar initial_error = 0;
  Scalar divergence_factor = 0;
  std::vector<AgentState<Scalar>> states;
  Trace<Scalar> trace;
  Matrix<Scalar> phi;

  Run(const Topology<Scalar>& t, const SolverConfig<Scalar>& cfg,
      const std::vector<EstimateSet<Scalar>>& sets, const RunOptions<Scalar>& opts,
      const char* name)
      : topo(t) {
    check_config(cfg);
    const Index K = static_cast<Index>(sets.size());
    require(K == topo.K, ErrorCode::invalid_argument,
            "solver: " + std::to_string(K) + " agents for a topology of " + std::to_string(topo.K));
    const Index M = sets.front().dim();
    taus = resolve_taus(cfg, K);
    theta_p = resolve_prior(cfg, M);
    std::vector<EstimateSet<Scalar>> weighted = sets;
    for (Index k = 0; k < K; ++k) weighted[static_cast<std::size_t>(k)].tau = taus[static_cast<std::size_t>(k)];
    const auto agg = aggregate(weighted).set;
    target = saddle_point(agg, cfg.eta, theta_p);
    trace.algorithm = name;
    trace.target = target;
    trace.gate = check_step_sizes(cfg, agg);
    if (!trace.gate.pass)
      warn(std::string(name) + ": step sizes fail the sufficient condition (ratio " +
           std::to_string(static_cast<double>(trace.gate.ratio)) + ", needs > " +
           std::to_string(static_cast<double>(trace.gate.rhs)) + ")");
    theta_star = opts.theta_star;
    divergence_factor = cfg.divergence_factor;
    if (opts.initial.empty()) {
      for (Index k = 0; k < K; ++k) states.push_back(make_state<Scalar>(Vector<Scalar>::Zero(2 * M)));
    } else {
      require(static_cast<Index>(opts.initial.size()) == K, ErrorCode::invalid_argument,
              "solver: wrong number of initial states");
      states = opts.initial;
      for (const auto& s : states)
        require(s.z.size() == 2 * M && s.psi_prev.size() == 2 * M, ErrorCode::invalid_argument,
                "solver: initial state has the wrong dimension");
    }
    phi.resize(2 * M, K);
  }

  Scalar error_of(const AgentState<Scalar>& s) const {
    return (s.z - target.stacked()).squaredNorm();
  }

  /// Records epoch `e`; returns the mean empirical error.
  Scalar record(long e) {
    const Scalar gap = consensus_gap(states);
    Scalar mean = 0;
    for (std::size_t k = 0; k < states.size(); ++k) {
      TraceRecord<Scalar> r;
      r.epoch = e;
      r.agent = static_cast<Index>(k);
      r.emp_error = error_of(states[k]);
      r.consensus_gap = gap;
      r.msd = theta_star.size() == 0 ? std::numeric_limits<Scalar>::quiet_NaN()
                                     : (states[k].theta() - theta_star).squaredNorm();
      r.grad_evals = states[k].grad_evals;
      r.comm_rounds = trace.comm_rounds;
      mean += r.emp_error;
      trace.records.push_back(r);
    }
    mean /= static_cast<Scalar>(states.size());
    if (e == 0) initial_error = mean;
    if (!std::isfinite(static_cast<double>(mean)) ||
        mean > divergence_factor * std::max(initial_error, Scalar(1)))
      throw Error(ErrorCode::divergence,
                  trace.algorithm + ": diverged at epoch " + std::to_string(e) + " (mean error " +
                      std::to_string(static_cast<double>(mean)) + ", initial " +
                      std::to_string(static_cast<double>(initial_error)) + ")");
    return mean;
  }

  bool converged(Scalar mean, Scalar tol) const {
    return tol > 0 && mean < tol && consensus_gap(states) < tol;
  }

  /// Adapt-correct-combine for every agent given its gradient estimate.
  void diffusion_step(const std::vector<Vector<Scalar>>& grads, Scalar mu_theta, Scalar mu_omega) {
    const Index K = static_cast<Index>(states.size());
    const Index M = states.front().dim();
    for (Index k = 0; k < K; ++k) {
      auto& s = states[static_cast<std::size_t>(k)];
      const auto& g = grads[static_cast<std::size_t>(k)];
      const Scalar tau = taus[static_cast<std::size_t>(k)];
      Vector<Scalar> psi(2 * M);
      psi.head(M) = s.z.head(M) - (tau * mu_theta) * g.head(M);
      psi.tail(M) = s.z.tail(M) - (tau * mu_omega) * g.tail(M);
      phi.col(k) = psi + s.z - s.psi_prev;
      s.psi_prev = std::move(psi);
    }
    // z_k = (phi_k + sum_n l_nk phi_n) / 2, after every phi is formed.
    const Matrix<Scalar> combined = (phi + phi * topo.L) / Scalar(2);
    for (Index k = 0; k < K; ++k) states[static_cast<std::size_t>(k)].z = combined.col(k);
    ++trace.comm_rounds;
  }
};

}  // namespace detail

/// Auxiliary state consistent with a fixed point z: psi_prev = z - tau diag(mu) beta_k(z).
template <typename Scalar>
std::vector<AgentState<Scalar>> consistent_states(const std::vector<EstimateSet<Scalar>>& sets,
                                                  const SolverConfig<Scalar>& cfg,
                                                  const Vector<Scalar>& z) {
  const Index K = static_cast<Index>(sets.size());
  const Index M = sets.front().dim();
  const auto taus = detail::resolve_taus(cfg, K);
  const auto theta_p = detail::resolve_prior(cfg, M);
  std::vector<AgentState<Scalar>> out;
  for (Index k = 0; k < K; ++k) {
    auto s = make_state<Scalar>(z);
    const Vector<Scalar> g = local_gradient(z, sets[static_cast<std::size_t>(k)], cfg.eta, theta_p);
    const Scalar tau = taus[static_cast<std::size_t>(k)];
    s.psi_prev.head(M) -= (tau * cfg.mu_theta) * g.head(M);
    s.psi_prev.tail(M) -= (tau * cfg.mu_omega) * g.tail(M);
    // Exact snapshot at z, as if an epoch had just ended there.
    s.g = g;
    s.snapshot_active = true;
    out.push_back(std::move(s));
  }
  return out;
}

/// Exact-gradient primal-dual diffusion. One epoch is one iteration.
template <typename Scalar>
Trace<Scalar> algorithm1_run(const std::vector<EstimateSet<Scalar>>& sets,
                             const Topology<Scalar>& topo, const SolverConfig<Scalar>& cfg,
                             const RunOptions<Scalar>& opts = {}) {
  require(!sets.empty(), ErrorCode::invalid_argument, "algorithm1: no agents");
  detail::Run<Scalar> run(topo, cfg, sets, opts, "algorithm1");
  const std::size_t K = sets.size();
  std::vector<Vector<Scalar>> grads(K);
  Scalar mean = run.record(0);
  long e = 0;
  while (e < cfg.max_epochs && !run.converged(mean, cfg.tol)) {
    for (std::size_t k = 0; k < K; ++k) {
      grads[k] = local_gradient(run.states[k].z, sets[k], cfg.eta, run.theta_p);
      run.states[k].grad_evals += sets[k].n_samples;
    }
    run.diffusion_step(grads, cfg.mu_theta, cfg.mu_omega);
    if (opts.observer) opts.observer(e, 0, run.states);
    ++e;
    mean = run.record(e);
  }
  run.trace.epochs = e;
  run.trace.converged = run.converged(mean, cfg.tol);
  run.trace.final_states = run.states;
  return std::move(run.trace);
}

namespace detail {

/// Shared loop of the mini-batch schemes. With `variance_reduced` false the
/// g and snapshot terms are dropped and the step sizes decay.
template <typename Scalar>
Trace<Scalar> minibatch_run(const std::vector<SampleBank<Scalar>>& banks,
                            const Topology<Scalar>& topo, const SolverConfig<Scalar>& cfg,
                            const RunOptions<Scalar>& opts, bool variance_reduced,
                            const char* name) {
  require(!banks.empty(), ErrorCode::invalid_argument, std::string(name) + ": no agents");
  const std::size_t K = banks.size();
  std::vector<EstimateSet<Scalar>> sets;
  for (const auto& b : banks) sets.push_back(b.estimates(cfg.u_mode));
  Run<Scalar> run(topo, cfg, sets, opts, name);

  std::vector<std::vector<std::pair<Index, Index>>> batches(K);
  std::vector<Rng> rngs;
  for (std::size_t k = 0; k < K; ++k) {
    batches[k] = minibatches(banks[k].size(), cfg.J);
    rngs.emplace_back(derive_seed(cfg.seed, "solver.agent_" + std::to_string(k)));
  }

  std::vector<Vector<Scalar>> grads(K);
  Scalar mean = run.record(0);
  long e = 0;
  while (e < cfg.max_epochs && !run.converged(mean, cfg.tol)) {
    const Scalar decay = variance_reduced ? Scalar(0) : cfg.decay;
    const Scalar mu_theta = decayed_step(cfg.mu_theta, decay, e);
    const Scalar mu_omega = decayed_step(cfg.mu_omega, decay, e);
    for (std::size_t k = 0; k < K; ++k) {
      auto& s = run.states[k];
      s.perm.resize(static_cast<std::size_t>(cfg.J));
      std::iota(s.perm.begin(), s.perm.end(), Index(0));
      rngs[k].shuffle(s.perm);
      s.g_next.setZero(s.z.size());
    }
    for (Index i = 0; i < cfg.J; ++i) {
      for (std::size_t k = 0; k < K; ++k) {
        auto& s = run.states[k];
        const auto& bank = banks[k];
        const Index n = bank.size();
        if (cfg.J == 1) {
          // The single batch is the whole local data set: exact local gradient.
          grads[k] = local_gradient(s.z, sets[k], cfg.eta, run.theta_p);
          s.grad_evals += n;
          if (variance_reduced) s.g_next += grads[k];
          continue;
        }
        const auto [lo, len] = batches[k][static_cast<std::size_t>(s.perm[static_cast<std::size_t>(i)])];
        const Vector<Scalar> current =
            minibatch_gradient(bank, s.z, lo, len, cfg.eta, run.theta_p, cfg.u_mode);
        s.grad_evals += len;
        if (!variance_reduced) {
          grads[k] = current;
          continue;
        }
        grads[k] = s.g + current;
        if (s.snapshot_active) {
          grads[k] -= minibatch_gradient(bank, s.snapshot, lo, len, cfg.eta, run.theta_p, cfg.u_mode);
          s.grad_evals += len;
        }
        s.g_next += (static_cast<Scalar>(len) / static_cast<Scalar>(n)) * current;
      }
      run.diffusion_step(grads, mu_theta, mu_omega);
      if (opts.observer) opts.observer(e, i, run.states);
    }
    for (auto& s : run.states) {
      if (variance_reduced) {
        s.g = s.g_next;
        s.snapshot = s.z;
        s.snapshot_active = true;
      }
    }
    ++e;
    mean = run.record(e);
  }
  run.trace.epochs = e;
  run.trace.converged = run.converged(mean, cfg.tol);
  run.trace.final_states = run.states;
  return std::move(run.trace);
}

}  // namespace detail

/// Variance-reduced mini-batch diffusion over per-agent sample banks.
template <typename Scalar>
Trace<Scalar> fdpe_run(const std::vector<SampleBank<Scalar>>& banks, const Topology<Scalar>& topo,
                       const SolverConfig<Scalar>& cfg, const RunOptions<Scalar>& opts = {}) {
  return detail::minibatch_run(banks, topo, cfg, opts, true, "fdpe");
}

template <typename Scalar>
std::vector<SampleBank<Scalar>> build_banks(const std::vector<Dataset<Scalar>>& datasets,
                                            const FeatureMap<Scalar>& features,
                                            const TraceParams<Scalar>& params) {
  std::vector<SampleBank<Scalar>> banks;
  for (const auto& d : datasets) banks.push_back(build_bank(d, features, params));
  return banks;
}

template <typename Scalar>
Trace<Scalar> fdpe_run(const std::vector<Dataset<Scalar>>& datasets,
                       const FeatureMap<Scalar>& features, const Topology<Scalar>& topo,
                       const SolverConfig<Scalar>& cfg, const RunOptions<Scalar>& opts = {}) {
  return fdpe_run(build_banks(datasets, features, cfg.trace), topo, cfg, opts);
}

/// Same diffusion structure with plain mini-batch gradients and decaying steps.
template <typename Scalar>
Trace<Scalar> decaying_baseline_run(const std::vector<SampleBank<Scalar>>& banks,
                                    const Topology<Scalar>& topo, const SolverConfig<Scalar>& cfg,
                                    const RunOptions<Scalar>& opts = {}) {
  return detail::minibatch_run(banks, topo, cfg, opts, false, "baseline");
}

template <typename Scalar>
Trace<Scalar> decaying_baseline_run(const std::vector<Dataset<Scalar>>& datasets,
                                    const FeatureMap<Scalar>& features,
                                    const Topology<Scalar>& topo, const SolverConfig<Scalar>& cfg,
                                    const RunOptions<Scalar>& opts = {}) {
  return decaying_baseline_run(build_banks(datasets, features, cfg.trace), topo, cfg, opts);
}

// ---------------------------------------------------------------------------
// Single-agent AVRG on a finite sum of quadratics
// Q_n(theta) = 0.5 theta^T H_n theta - c_n^T theta.

template <typename Scalar = double>
struct QuadraticFiniteSum {
  std::vector<Matrix<Scalar>> H;
  std::vector<Vector<Scalar>> c;

  Index size() const { return static_cast<Index>(H.size()); }
  Index dim() const { return c.front().size(); }
  Vector<Scalar> gradient(Index n, const Vector<Scalar>& theta) const {
    return H[static_cast<std::size_t>(n)] * theta - c[static_cast<std::size_t>(n)];
  }
  Vector<Scalar> full_gradient(const Vector<Scalar>& theta) const {
    Matrix<Scalar> Hm = Matrix<Scalar>::Zero(dim(), dim());
    Vector<Scalar> cm = Vector<Scalar>::Zero(dim());
    for (Index n = 0; n < size(); ++n) {
      Hm += H[static_cast<std::size_t>(n)];
      cm += c[static_cast<std::size_t>(n)];
    }
    return (Hm * theta - cm) / static_cast<Scalar>(size());
  }
  Vector<Scalar> minimizer() const {
    Matrix<Scalar> Hm = Matrix<Scalar>::Zero(dim(), dim());
    Vector<Scalar> cm = Vector<Scalar>::Zero(dim());
    for (Index n = 0; n < size(); ++n) {
      Hm += H[static_cast<std::size_t>(n)];
      cm += c[static_cast<std::size_t>(n)];
    }
    return solve_checked<Scalar>(Hm, cm, "quadratic minimizer");
  }
};

template <typename Scalar = double>
struct AvrgResult {
  /// ||theta_0^e - minimizer||^2 per epoch start, plus the final iterate.
  std::vector<Scalar> error;
  /// g^e for e = 0..epochs.
  std::vector<Vector<Scalar>> g;
  /// theta_0^e for e = 0..epochs.
  std::vector<Vector<Scalar>> theta;
};

template <typename Scalar>
AvrgResult<Scalar> avrg_run(const QuadraticFiniteSum<Scalar>& problem, Scalar mu, long epochs,
                            std::uint64_t seed, const Vector<Scalar>& theta0,
                            Scalar divergence_factor = Scalar(1e6)) {
  require(problem.size() >= 1, ErrorCode::invalid_argument, "avrg: empty problem");
  require(mu >= 0, ErrorCode::config, "avrg: step size must be non-negative");
  const Index N = problem.size();
  const Vector<Scalar> opt = problem.minimizer();
  Rng rng(seed);
  std::vector<Index> perm(static_cast<std::size_t>(N));
  std::iota(perm.begin(), perm.end(), Index(0));

  AvrgResult<Scalar> out;
  Vector<Scalar> theta = theta0;
  Vector<Scalar> g = Vector<Scalar>::Zero(theta.size());
  const Scalar initial = (theta - opt).squaredNorm();
  out.error.push_back(initial);
  out.g.push_back(g);
  out.theta.push_back(theta);
  for (long e = 0; e < epochs; ++e) {
    rng.shuffle(perm);
    const Vector<Scalar> snapshot = theta;
    Vector<Scalar> g_next = Vector<Scalar>::Zero(theta.size());
    for (Index i = 0; i < N; ++i) {
      const Index n = perm[static_cast<std::size_t>(i)];
      const Vector<Scalar> current = problem.gradient(n, theta);
      Vector<Scalar> step = current + g;
      if (e > 0) step -= problem.gradient(n, snapshot);
      g_next += current / static_cast<Scalar>(N);
      theta -= mu * step;
    }
    g = g_next;
    const Scalar err = (theta - opt).squaredNorm();
    if (!std::isfinite(static_cast<double>(err)) || err > divergence_factor * std::max(initial, Scalar(1)))
      throw Error(ErrorCode::divergence, "avrg: diverged at epoch " + std::to_string(e + 1));
    out.error.push_back(err);
    out.g.push_back(g);
    out.theta.push_back(theta);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rate diagnostics.

template <typename Scalar = double>
struct RateFit {
  Scalar rate = 0;  // per-epoch contraction factor exp(slope)
  Scalar r2 = 0;
  long first = 0;
  long last = 0;
};

/// Line fit of log(error) against epoch over the middle 60% of the epochs
/// recorded before the error first drops below `floor`.
template <typename Scalar>
RateFit<Scalar> fit_linear_rate(const std::vector<Scalar>& error, Scalar floor) {
  long end = static_cast<long>(error.size());
  for (long e = 0; e < static_cast<long>(error.size()); ++e)
    if (!(error[static_cast<std::size_t>(e)] > floor)) {
      end = e;
      break;
    }
  RateFit<Scalar> fit;
  fit.first = static_cast<long>(0.2 * static_cast<double>(end));
  fit.last = static_cast<long>(0.8 * static_cast<double>(end));
  const long n = fit.last - fit.first;
  if (n < 3) return fit;
  Scalar sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (long e = fit.first; e < fit.last; ++e) {
    const Scalar x = static_cast<Scalar>(e);
    const Scalar y = std::log(error[static_cast<std::size_t>(e)]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const Scalar nn = static_cast<Scalar>(n);
  const Scalar cov = sxy - sx * sy / nn;
  const Scalar vx = sxx - sx * sx / nn;
  const Scalar vy = syy - sy * sy / nn;
  const Scalar slope = cov / vx;
  fit.rate = std::exp(slope);
  fit.r2 = vy > 0 ? cov * cov / (vx * vy) : Scalar(1);
  return fit;
}

}  // namespace fdpe

#endif  // FDPE_SOLVER_HPP
