#ifndef FDPE_TEST_HELPERS_HPP
#define FDPE_TEST_HELPERS_HPP

#include "fdpe/core.hpp"
#include "fdpe/mdp.hpp"

#include <random>
#include <vector>

namespace testing {

using fdpe::Index;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Dense random MDP with strictly positive transitions (ergodic under any policy).
inline fdpe::Mdp<double> dense_mdp(Index S, Index A, unsigned seed, double gamma = 0.9) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  fdpe::Mdp<double> mdp;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.gamma = gamma;
  for (Index a = 0; a < A; ++a) {
    Mat p(S, S), r(S, S);
    for (Index i = 0; i < S; ++i)
      for (Index j = 0; j < S; ++j) {
        p(i, j) = u(gen);
        r(i, j) = n(gen);
      }
    for (Index i = 0; i < S; ++i) p.row(i) /= p.row(i).sum();
    mdp.transitions.push_back(p);
    mdp.rewards.push_back(r);
  }
  return mdp;
}

inline fdpe::Policy<double> dense_policy(Index S, Index A, unsigned seed, double floor = 0.05) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(floor, 1.0);
  Mat p(S, A);
  for (Index i = 0; i < S; ++i) {
    for (Index a = 0; a < A; ++a) p(i, a) = u(gen);
    p.row(i) /= p.row(i).sum();
  }
  return fdpe::Policy<double>{p};
}

inline Mat random_matrix(Index r, Index c, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = n(gen);
  return m;
}

inline Vec random_vector(Index n, unsigned seed) { return random_matrix(n, 1, seed).col(0); }

/// Chain from a random right-stochastic matrix and reward vector.
inline fdpe::MarkovChain<double> random_chain(Index S, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Mat p(S, S);
  for (Index i = 0; i < S; ++i) {
    for (Index j = 0; j < S; ++j) p(i, j) = u(gen);
    p.row(i) /= p.row(i).sum();
  }
  return fdpe::MarkovChain<double>{p, random_vector(S, seed + 1)};
}

/// Uniform-positive diagonal weights summing to one.
inline Vec random_weights(Index S, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Vec d(S);
  for (Index i = 0; i < S; ++i) d(i) = u(gen);
  return d / d.sum();
}

inline double relative_error(const Mat& approx, const Mat& exact) {
  return (approx - exact).norm() / exact.norm();
}

}  // namespace testing

#endif  // FDPE_TEST_HELPERS_HPP
