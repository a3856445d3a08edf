#ifndef FDPE_TEST_DESK_HPP
#define FDPE_TEST_DESK_HPP

#include "fdpe/estimators.hpp"
#include "fdpe/mdp.hpp"
#include "fdpe/network.hpp"
#include "fdpe/solver.hpp"

#include <string>
#include <vector>

namespace testing {

/// Small on-policy multi-agent problem on a random MDP with a ring network.
struct SmallProblem {
  fdpe::FeatureMap<double> X;
  std::vector<fdpe::SampleBank<double>> banks;
  std::vector<fdpe::EstimateSet<double>> sets;
  fdpe::Topology<double> topo;
  fdpe::SolverConfig<double> cfg;
};

inline SmallProblem small_problem(fdpe::Index K, std::uint64_t seed, fdpe::Index N = 600,
                                  double eta = 0.0) {
  using namespace fdpe;
  SmallProblem p;
  const auto [mdp, pi] = random_mdp<double>(20, 4, 0.6, 0.5, 1.0, seed);
  p.X = random_features<double>(20, 5, seed + 1);
  p.cfg.trace = TraceParams<double>{0.9, 0.5, 4};
  p.cfg.eta = eta;
  for (Index k = 0; k < K; ++k) {
    const auto data = collect(mdp, pi, pi, N, derive_seed(seed, "data.agent_" + std::to_string(k)));
    p.banks.push_back(build_bank(data, p.X, p.cfg.trace));
    p.sets.push_back(p.banks.back().estimates(UMode::identity));
  }
  p.topo = K == 1 ? single_agent<double>() : metropolis<double>(ring_adjacency(K));
  // Step sizes: ratio above the gate, primal step scaled to the aggregate.
  std::vector<EstimateSet<double>> weighted = p.sets;
  for (auto& s : weighted) s.tau = 1.0 / static_cast<double>(K);
  const auto agg = aggregate(weighted).set;
  const auto gate = check_step_sizes(1.0, 1.0, eta, agg);
  const double ratio = 2.0 * gate.ratio_min;
  const double scale = lambda_max_symmetric(agg.C);
  p.cfg.mu_theta = 0.2 * static_cast<double>(K) / (ratio * scale);
  p.cfg.mu_omega = ratio * p.cfg.mu_theta;
  p.cfg.seed = seed;
  return p;
}

}  // namespace testing

#endif  // FDPE_TEST_DESK_HPP
