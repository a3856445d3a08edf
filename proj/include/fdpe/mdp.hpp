#ifndef FDPE_MDP_HPP
#define FDPE_MDP_HPP

#include "fdpe/core.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace fdpe {

/// Finite MDP with dense tensors. `transitions[a](s, s')` is P(s'|s,a) and
/// `rewards[a](s, s')` is r(s,a,s').
template <typename Scalar = double>
struct Mdp {
  Index num_states = 0;
  Index num_actions = 0;
  std::vector<Matrix<Scalar>> transitions;
  std::vector<Matrix<Scalar>> rewards;
  Scalar gamma = Scalar(0.9);

  // Provenance, carried into serialized output.
  std::string generator = "custom";
  std::uint64_t seed = 0;
};

/// State-conditional action distribution, one row per state.
template <typename Scalar = double>
struct Policy {
  Matrix<Scalar> probs;

  Index num_states() const { return probs.rows(); }
  Index num_actions() const { return probs.cols(); }
  Scalar operator()(Index action, Index state) const { return probs(state, action); }
};

/// Markov reward process induced by a policy.
template <typename Scalar = double>
struct MarkovChain {
  Matrix<Scalar> transition;
  Vector<Scalar> expected_reward;

  Index num_states() const { return transition.rows(); }
};

inline constexpr double kStochasticTol = 1e-12;

template <typename Derived>
bool is_row_stochastic(const Eigen::MatrixBase<Derived>& m, double tol = kStochasticTol) {
  if (m.size() == 0) return false;
  if ((m.array() < 0).any()) return false;
  if (!m.allFinite()) return false;
  return ((m.rowwise().sum().array() - 1).abs() <= tol).all();
}

template <typename Scalar>
void validate(const Mdp<Scalar>& mdp) {
  require(mdp.num_states > 0 && mdp.num_actions > 0, ErrorCode::invalid_argument,
          "mdp: empty state or action set");
  require(static_cast<Index>(mdp.transitions.size()) == mdp.num_actions &&
              static_cast<Index>(mdp.rewards.size()) == mdp.num_actions,
          ErrorCode::invalid_argument, "mdp: tensor/action count mismatch");
  require(mdp.gamma >= 0 && mdp.gamma < 1, ErrorCode::invalid_argument,
          "mdp: gamma must lie in [0,1)");
  for (Index a = 0; a < mdp.num_actions; ++a) {
    const auto& p = mdp.transitions[a];
    require(p.rows() == mdp.num_states && p.cols() == mdp.num_states,
            ErrorCode::invalid_argument, "mdp: transition slice has wrong shape");
    require(mdp.rewards[a].rows() == mdp.num_states && mdp.rewards[a].cols() == mdp.num_states,
            ErrorCode::invalid_argument, "mdp: reward slice has wrong shape");
    require(is_row_stochastic(p), ErrorCode::invalid_argument,
            "mdp: transition rows must be probability vectors");
    require(mdp.rewards[a].allFinite(), ErrorCode::invalid_argument, "mdp: non-finite reward");
  }
}

template <typename Scalar>
void validate(const Policy<Scalar>& policy) {
  require(is_row_stochastic(policy.probs), ErrorCode::invalid_argument,
          "policy: rows must be probability vectors");
}

template <typename Scalar>
void validate(const MarkovChain<Scalar>& chain) {
  require(chain.transition.rows() == chain.transition.cols() &&
              chain.expected_reward.size() == chain.transition.rows(),
          ErrorCode::invalid_argument, "chain: shape mismatch");
  require(is_row_stochastic(chain.transition), ErrorCode::invalid_argument,
          "chain: transition matrix must be right stochastic");
}

/// P^pi(i,j) = sum_a pi(a|i) P(j|i,a);  r^pi(i) = sum_a sum_j pi(a|i) P(j|i,a) r(i,a,j).
template <typename Scalar>
MarkovChain<Scalar> induce_chain(const Mdp<Scalar>& mdp, const Policy<Scalar>& policy) {
  require(policy.num_states() == mdp.num_states && policy.num_actions() == mdp.num_actions,
          ErrorCode::invalid_argument, "induce_chain: mdp and policy dimensions differ");
  const Index S = mdp.num_states;
  MarkovChain<Scalar> chain;
  chain.transition = Matrix<Scalar>::Zero(S, S);
  chain.expected_reward = Vector<Scalar>::Zero(S);
  for (Index a = 0; a < mdp.num_actions; ++a) {
    const auto weights = policy.probs.col(a).asDiagonal();
    chain.transition.noalias() += weights * mdp.transitions[a];
    chain.expected_reward.noalias() +=
        weights * mdp.transitions[a].cwiseProduct(mdp.rewards[a]).rowwise().sum();
  }
  return chain;
}

/// Exact v = (I - gamma P)^{-1} r.
template <typename Scalar>
Vector<Scalar> value_function(const MarkovChain<Scalar>& chain, Scalar gamma) {
  require(gamma >= 0 && gamma < 1, ErrorCode::invalid_argument,
          "value_function: gamma must lie in [0,1)");
  const Index S = chain.num_states();
  Matrix<Scalar> system = Matrix<Scalar>::Identity(S, S) - gamma * chain.transition;
  return solve_checked<Scalar>(system, chain.expected_reward, "value_function");
}

// ---------------------------------------------------------------------------
// Chain structure: communicating classes and periodicity.

struct ChainStructure {
  std::vector<int> component;           // SCC id per state
  std::vector<int> closed_components;   // SCC ids with no exits
  int num_components = 0;
  int period = 0;                       // of the unique closed class, 0 if not unique

  bool unichain() const { return closed_components.size() == 1; }
  bool irreducible() const { return num_components == 1; }
  bool ergodic() const { return irreducible() && period == 1; }
};

template <typename Scalar>
ChainStructure analyze_chain(const Matrix<Scalar>& transition) {
  const int n = static_cast<int>(transition.rows());
  std::vector<std::vector<int>> out(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (transition(i, j) > 0) out[i].push_back(j);

  // Iterative Tarjan.
  ChainStructure result;
  result.component.assign(n, -1);
  std::vector<int> index(n, -1), low(n, 0), stack;
  std::vector<char> on_stack(n, 0);
  int counter = 0;
  for (int root = 0; root < n; ++root) {
    if (index[root] >= 0) continue;
    std::vector<std::pair<int, std::size_t>> work{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!work.empty()) {
      auto& [v, next] = work.back();
      if (next < out[v].size()) {
        const int w = out[v][next++];
        if (index[w] < 0) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          work.emplace_back(w, 0);
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        int w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          result.component[w] = result.num_components;
        } while (w != v);
        ++result.num_components;
      }
      const int finished = v;
      work.pop_back();
      if (!work.empty()) low[work.back().first] = std::min(low[work.back().first], low[finished]);
    }
  }

  std::vector<char> has_exit(result.num_components, 0);
  for (int i = 0; i < n; ++i)
    for (int j : out[i])
      if (result.component[i] != result.component[j]) has_exit[result.component[i]] = 1;
  for (int c = 0; c < result.num_components; ++c)
    if (!has_exit[c]) result.closed_components.push_back(c);

  if (result.unichain()) {
    const int cls = result.closed_components.front();
    int start = 0;
    while (result.component[start] != cls) ++start;
    std::vector<int> level(n, -1);
    std::vector<int> queue{start};
    level[start] = 0;
    int g = 0;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const int v = queue[head];
      for (int w : out[v]) {
        if (result.component[w] != cls) continue;
        if (level[w] < 0) {
          level[w] = level[v] + 1;
          queue.push_back(w);
        } else {
          g = std::gcd(g, std::abs(level[v] + 1 - level[w]));
        }
      }
    }
    result.period = g;
  }
  return result;
}

struct StationaryOptions {
  double tol = 1e-12;
  long max_iterations = 1'000'000;
  /// Accept a periodic recurrent class and return its (Cesaro) stationary
  /// vector, computed on the lazy chain (I + P)/2.
  bool allow_periodic = false;
};

/// Stationary distribution by power iteration from the uniform vector. The
/// chain must have a single recurrent class; transient states receive zero mass.
template <typename Scalar>
Vector<Scalar> stationary_distribution(const MarkovChain<Scalar>& chain,
                                       const StationaryOptions& options = {}) {
  validate(chain);
  const Index S = chain.num_states();
  const ChainStructure structure = analyze_chain(chain.transition);
  require(structure.unichain(), ErrorCode::chain_not_ergodic,
          "stationary_distribution: chain has " +
              std::to_string(structure.closed_components.size()) + " recurrent classes");
  const bool lazy = structure.period != 1;
  require(!lazy || options.allow_periodic, ErrorCode::chain_not_ergodic,
          "stationary_distribution: recurrent class has period " +
              std::to_string(structure.period));

  Matrix<Scalar> step = chain.transition.transpose();
  if (lazy) step = (step + Matrix<Scalar>::Identity(S, S)) / Scalar(2);

  Vector<Scalar> d = Vector<Scalar>::Constant(S, Scalar(1) / Scalar(S));
  Vector<Scalar> next(S);
  bool converged = false;
  for (long it = 0; it < options.max_iterations; ++it) {
    next.noalias() = step * d;
    next /= next.sum();
    const Scalar delta = (next - d).cwiseAbs().sum();
    d.swap(next);
    if (delta < options.tol) {
      converged = true;
      break;
    }
  }
  require(converged, ErrorCode::chain_not_ergodic,
          "stationary_distribution: power iteration did not converge");
  d = d.cwiseMax(Scalar(0));
  d /= d.sum();
  const Scalar residual = (chain.transition.transpose() * d - d).cwiseAbs().maxCoeff();
  require(residual < Scalar(1e-10), ErrorCode::chain_not_ergodic,
          "stationary_distribution: fixed-point residual too large");
  return d;
}

// ---------------------------------------------------------------------------
// Generators.

enum GridAction : Index { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

struct GridShape {
  Index width = 0;
  Index height = 0;

  Index num_states() const { return width * height; }
  Index state(Index x, Index y) const { return y * width + x; }
  Index x(Index s) const { return s % width; }
  Index y(Index s) const { return s / width; }

  /// Destination of `action` from `s`, clamped at the boundary.
  Index move(Index s, Index action) const {
    Index cx = x(s), cy = y(s);
    switch (action) {
      case kUp: cy = std::max<Index>(cy - 1, 0); break;
      case kDown: cy = std::min<Index>(cy + 1, height - 1); break;
      case kLeft: cx = std::max<Index>(cx - 1, 0); break;
      case kRight: cx = std::min<Index>(cx + 1, width - 1); break;
      default: break;
    }
    return state(cx, cy);
  }
};

struct GridOptions {
  double gamma = 0.93;
  // Reward distribution for reachable (s,a,s') triples: uniform on [low, high).
  double reward_low = 0.0;
  double reward_high = 1.0;
};

template <typename Scalar = double>
Matrix<Scalar> random_policy_probs(Index S, Index A, Rng& rng) {
  Matrix<Scalar> probs(S, A);
  for (Index s = 0; s < S; ++s) {
    for (Index a = 0; a < A; ++a) probs(s, a) = static_cast<Scalar>(rng.uniform_open());
    probs.row(s) /= probs.row(s).sum();
  }
  return probs;
}

/// Deterministic-move grid world with UP/DOWN/LEFT/RIGHT, seeded random
/// rewards and a seeded random target policy.
template <typename Scalar = double>
std::pair<Mdp<Scalar>, Policy<Scalar>> grid_mdp(Index width, Index height, std::uint64_t seed,
                                                const GridOptions& options = {}) {
  require(width >= 2 && height >= 2, ErrorCode::invalid_argument,
          "grid_mdp: width and height must be at least 2");
  const GridShape grid{width, height};
  const Index S = grid.num_states();
  Rng rng(seed);
  Mdp<Scalar> mdp;
  mdp.num_states = S;
  mdp.num_actions = 4;
  mdp.gamma = static_cast<Scalar>(options.gamma);
  mdp.generator = "grid";
  mdp.seed = seed;
  for (Index a = 0; a < 4; ++a) {
    mdp.transitions.push_back(Matrix<Scalar>::Zero(S, S));
    mdp.rewards.push_back(Matrix<Scalar>::Zero(S, S));
  }
  for (Index s = 0; s < S; ++s) {
    for (Index a = 0; a < 4; ++a) {
      const Index dest = grid.move(s, a);
      mdp.transitions[a](s, dest) = Scalar(1);
      mdp.rewards[a](s, dest) =
          static_cast<Scalar>(rng.uniform(options.reward_low, options.reward_high));
    }
  }
  Policy<Scalar> target{random_policy_probs<Scalar>(S, 4, rng)};
  validate(mdp);
  return {std::move(mdp), std::move(target)};
}

/// Sparse reward tensor: zero with probability `p_zero`, otherwise N(0, sd^2).
template <typename Scalar = double>
std::vector<Matrix<Scalar>> sparse_rewards(Index S, Index A, double p_zero, double sd, Rng& rng) {
  std::vector<Matrix<Scalar>> rewards(A, Matrix<Scalar>::Zero(S, S));
  for (Index a = 0; a < A; ++a)
    for (Index s = 0; s < S; ++s)
      for (Index t = 0; t < S; ++t)
        if (!rng.bernoulli(p_zero)) rewards[a](s, t) = static_cast<Scalar>(sd * rng.normal());
  return rewards;
}

struct RandomMdpOptions {
  double gamma = 0.93;
  int max_attempts = 10000;
};

/// Sparse random MDP. Transitions and target policy are resampled until the
/// target chain is irreducible and aperiodic.
template <typename Scalar = double>
std::pair<Mdp<Scalar>, Policy<Scalar>> random_mdp(Index S, Index A, double p_zero_trans,
                                                  double p_zero_reward, double reward_sd,
                                                  std::uint64_t seed,
                                                  const RandomMdpOptions& options = {}) {
  require(S > 0 && A > 0, ErrorCode::invalid_argument, "random_mdp: empty dimensions");
  require(p_zero_trans >= 0 && p_zero_trans < 1 && p_zero_reward >= 0 && p_zero_reward < 1,
          ErrorCode::invalid_argument, "random_mdp: sparsity probabilities must lie in [0,1)");
  Rng rng(seed);
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    Mdp<Scalar> mdp;
    mdp.num_states = S;
    mdp.num_actions = A;
    mdp.gamma = static_cast<Scalar>(options.gamma);
    mdp.generator = "random";
    mdp.seed = seed;
    for (Index a = 0; a < A; ++a) {
      Matrix<Scalar> p = Matrix<Scalar>::Zero(S, S);
      for (Index s = 0; s < S; ++s) {
        for (Index t = 0; t < S; ++t)
          if (!rng.bernoulli(p_zero_trans)) p(s, t) = static_cast<Scalar>(rng.uniform_open());
        if (p.row(s).sum() <= 0)
          p(s, static_cast<Index>(rng.index(S))) = static_cast<Scalar>(rng.uniform_open());
        p.row(s) /= p.row(s).sum();
      }
      mdp.transitions.push_back(std::move(p));
    }
    mdp.rewards = sparse_rewards<Scalar>(S, A, p_zero_reward, reward_sd, rng);
    Policy<Scalar> target{random_policy_probs<Scalar>(S, A, rng)};
    if (analyze_chain(induce_chain(mdp, target).transition).ergodic()) {
      validate(mdp);
      return {std::move(mdp), std::move(target)};
    }
  }
  throw Error(ErrorCode::generation_failed,
              "random_mdp: no ergodic instance within the resampling budget");
}

}  // namespace fdpe

#endif  // FDPE_MDP_HPP
