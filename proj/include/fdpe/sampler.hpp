#ifndef FDPE_SAMPLER_HPP
#define FDPE_SAMPLER_HPP

#include "fdpe/core.hpp"
#include "fdpe/mdp.hpp"

#include <cstring>
#include <memory>
#include <string>
#include <vector>

namespace fdpe {

/// One contiguous behavior-policy trajectory. Transition t is
/// (states[t], actions[t], rewards[t], states[t+1]); the successor of the last
/// transition is `final_state`.
template <typename Scalar = double>
struct Dataset {
  std::vector<Index> states;
  std::vector<Index> actions;
  std::vector<Scalar> rewards;
  Index final_state = 0;
  std::shared_ptr<const Policy<Scalar>> behavior;
  std::shared_ptr<const Policy<Scalar>> target;
  /// pi(a_t|s_t) / phi(a_t|s_t) per logged step.
  std::vector<Scalar> step_ratios;
  std::uint64_t seed = 0;
  /// Logged steps taken at states where the target puts mass on an action the
  /// behavior never takes. Non-zero only when collection allowed it.
  long support_violations = 0;

  Index size() const { return static_cast<Index>(states.size()); }
  Index next_state(Index t) const {
    return t + 1 < size() ? states[static_cast<std::size_t>(t + 1)] : final_state;
  }
};

/// Cumulative importance weights xi(t, h) = prod_{j=t}^{t+h-1} pi(a_j|s_j)/phi(a_j|s_j)
/// for usable t in [0, N-H) and h in [0, H]; xi(t, 0) = 1.
template <typename Scalar = double>
struct RatioTable {
  Matrix<Scalar> xi;

  Index horizon() const { return xi.cols() - 1; }
  Index usable() const { return xi.rows(); }
  Scalar operator()(Index t, Index h) const { return xi(t, h); }
};

struct CollectOptions {
  Index burn_in = 100;
  /// Initial state drawn uniformly from this set; empty means all states.
  std::vector<Index> initial_states;
  /// Permit states where pi(a|s) > 0 but phi(a|s) = 0; such steps are counted
  /// in Dataset::support_violations instead of raising.
  bool allow_unsupported = false;
};

template <typename Scalar>
std::uint64_t policy_hash(const Policy<Scalar>& policy) {
  std::uint64_t h = fnv1a64("policy");
  for (Index s = 0; s < policy.num_states(); ++s) {
    for (Index a = 0; a < policy.num_actions(); ++a) {
      const double p = static_cast<double>(policy.probs(s, a));
      char bytes[sizeof(double)];
      std::memcpy(bytes, &p, sizeof(double));
      h = fnv1a64(std::string_view(bytes, sizeof(double)), h);
    }
  }
  return h;
}

template <typename Scalar>
bool target_supported_at(const Policy<Scalar>& behavior, const Policy<Scalar>& target,
                         Index s) {
  for (Index a = 0; a < target.num_actions(); ++a)
    if (target.probs(s, a) > 0 && !(behavior.probs(s, a) > 0)) return false;
  return true;
}

template <typename Scalar>
Dataset<Scalar> collect(const Mdp<Scalar>& mdp, const Policy<Scalar>& behavior,
                        const Policy<Scalar>& target, Index num_samples, std::uint64_t seed,
                        const CollectOptions& options = {}) {
  require(num_samples >= 1, ErrorCode::invalid_argument, "collect: need at least one sample");
  require(behavior.num_states() == mdp.num_states && behavior.num_actions() == mdp.num_actions &&
              target.num_states() == mdp.num_states && target.num_actions() == mdp.num_actions,
          ErrorCode::invalid_argument, "collect: policy dimensions do not match the mdp");
  validate(behavior);
  validate(target);

  std::vector<char> supported(static_cast<std::size_t>(mdp.num_states));
  for (Index s = 0; s < mdp.num_states; ++s)
    supported[static_cast<std::size_t>(s)] = target_supported_at(behavior, target, s);

  Rng rng(seed);
  Dataset<Scalar> data;
  data.behavior = std::make_shared<const Policy<Scalar>>(behavior);
  data.target = std::make_shared<const Policy<Scalar>>(target);
  data.seed = seed;
  data.states.reserve(static_cast<std::size_t>(num_samples));
  data.actions.reserve(static_cast<std::size_t>(num_samples));
  data.rewards.reserve(static_cast<std::size_t>(num_samples));
  data.step_ratios.reserve(static_cast<std::size_t>(num_samples));

  Index s;
  if (options.initial_states.empty()) {
    s = static_cast<Index>(rng.index(static_cast<std::uint64_t>(mdp.num_states)));
  } else {
    s = options.initial_states[rng.index(options.initial_states.size())];
    require(s >= 0 && s < mdp.num_states, ErrorCode::invalid_argument,
            "collect: initial state out of range");
  }

  const Index total = options.burn_in + num_samples;
  for (Index step = 0; step < total; ++step) {
    const Index a = rng.categorical(behavior.probs.row(s));
    const Index next = rng.categorical(mdp.transitions[a].row(s));
    if (step >= options.burn_in) {
      if (!supported[static_cast<std::size_t>(s)]) {
        if (!options.allow_unsupported)
          throw Error(ErrorCode::unsupported_off_policy,
                      "collect: target takes an action the behavior never takes at state " +
                          std::to_string(s));
        ++data.support_violations;
      }
      data.states.push_back(s);
      data.actions.push_back(a);
      data.rewards.push_back(mdp.rewards[a](s, next));
      data.step_ratios.push_back(target.probs(s, a) / behavior.probs(s, a));
    }
    s = next;
  }
  data.final_state = s;
  return data;
}

/// Importance-weight table for horizon H, by forward recursion (log-space
/// accumulation once H exceeds 30).
template <typename Scalar>
RatioTable<Scalar> ratios(const Dataset<Scalar>& data, Index horizon) {
  require(horizon >= 1, ErrorCode::invalid_argument, "ratios: horizon must be positive");
  require(data.size() > horizon, ErrorCode::insufficient_data,
          "ratios: need N > H samples (N=" + std::to_string(data.size()) +
              ", H=" + std::to_string(horizon) + ")");
  const Index usable = data.size() - horizon;
  RatioTable<Scalar> table{Matrix<Scalar>(usable, horizon + 1)};
  const bool log_space = horizon > 30;
  for (Index t = 0; t < usable; ++t) {
    table.xi(t, 0) = Scalar(1);
    if (log_space) {
      Scalar log_acc = 0;
      for (Index h = 1; h <= horizon; ++h) {
        const Scalar r = data.step_ratios[static_cast<std::size_t>(t + h - 1)];
        if (r == Scalar(0)) {
          for (Index k = h; k <= horizon; ++k) table.xi(t, k) = Scalar(0);
          break;
        }
        log_acc += std::log(r);
        table.xi(t, h) = std::exp(log_acc);
      }
    } else {
      for (Index h = 1; h <= horizon; ++h)
        table.xi(t, h) = table.xi(t, h - 1) * data.step_ratios[static_cast<std::size_t>(t + h - 1)];
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Region-restricted behavior policies on grid worlds.

/// Partition of the grid into n_x by n_y rectangular regions, row-major.
inline std::vector<std::vector<Index>> grid_regions(const GridShape& grid, Index n_x, Index n_y) {
  require(n_x >= 1 && n_y >= 1 && n_x <= grid.width && n_y <= grid.height,
          ErrorCode::invalid_argument, "grid_regions: bad partition");
  std::vector<std::vector<Index>> regions(static_cast<std::size_t>(n_x * n_y));
  for (Index s = 0; s < grid.num_states(); ++s) {
    const Index rx = grid.x(s) * n_x / grid.width;
    const Index ry = grid.y(s) * n_y / grid.height;
    regions[static_cast<std::size_t>(ry * n_x + rx)].push_back(s);
  }
  return regions;
}

/// Zero the actions that would leave `region` (from states inside it) and
/// renormalize. States outside the region keep the base distribution.
template <typename Scalar>
Policy<Scalar> restricted_policy(const Policy<Scalar>& base, const std::vector<Index>& region,
                                 const GridShape& grid) {
  require(!region.empty(), ErrorCode::invalid_region, "restricted_policy: empty region");
  require(base.num_states() == grid.num_states() && base.num_actions() == 4,
          ErrorCode::invalid_argument, "restricted_policy: policy does not match the grid");
  std::vector<char> inside(static_cast<std::size_t>(grid.num_states()), 0);
  for (Index s : region) {
    require(s >= 0 && s < grid.num_states(), ErrorCode::invalid_region,
            "restricted_policy: region state out of range");
    inside[static_cast<std::size_t>(s)] = 1;
  }
  Policy<Scalar> out = base;
  for (Index s : region) {
    for (Index a = 0; a < 4; ++a)
      if (!inside[static_cast<std::size_t>(grid.move(s, a))]) out.probs(s, a) = Scalar(0);
    const Scalar mass = out.probs.row(s).sum();
    require(mass > 0, ErrorCode::invalid_region,
            "restricted_policy: every action leaves the region at state " + std::to_string(s));
    out.probs.row(s) /= mass;
  }
  return out;
}

}  // namespace fdpe

#endif  // FDPE_SAMPLER_HPP
