#ifndef FDPE_NETWORK_HPP
#define FDPE_NETWORK_HPP

#include "fdpe/core.hpp"

#include <numeric>
#include <string>
#include <vector>

namespace fdpe {

/// Undirected agent graph with a symmetric doubly-stochastic combination matrix.
template <typename Scalar = double>
struct Topology {
  Index K = 0;
  /// Symmetric 0/1 adjacency without the implied self-loops.
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> adjacency;
  Matrix<Scalar> L;
  /// Agent coordinates in the unit square, when generated geometrically.
  std::vector<std::pair<double, double>> positions;
  Scalar lambda2 = 0;

  /// Neighbourhood size including the agent itself.
  Index degree(Index k) const { return adjacency.row(k).sum() + 1; }
};

using Adjacency = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

inline Index uf_find(std::vector<Index>& parent, Index i) {
  while (parent[static_cast<std::size_t>(i)] != i) {
    parent[static_cast<std::size_t>(i)] =
        parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
    i = parent[static_cast<std::size_t>(i)];
  }
  return i;
}

}  // namespace detail

/// Connectivity by union-find over the edge list.
inline bool connected(const Adjacency& adjacency) {
  const Index K = adjacency.rows();
  if (K == 0) return false;
  std::vector<Index> parent(static_cast<std::size_t>(K));
  std::iota(parent.begin(), parent.end(), Index(0));
  Index components = K;
  for (Index i = 0; i < K; ++i)
    for (Index j = i + 1; j < K; ++j) {
      if (!adjacency(i, j)) continue;
      const Index a = detail::uf_find(parent, i);
      const Index b = detail::uf_find(parent, j);
      if (a != b) {
        parent[static_cast<std::size_t>(a)] = b;
        --components;
      }
    }
  return components == 1;
}

/// lambda_2((L + I)/2); 0 for a single agent.
template <typename Scalar>
Scalar spectral_gap(const Matrix<Scalar>& L) {
  const Index K = L.rows();
  if (K <= 1) return Scalar(0);
  const Matrix<Scalar> lbar = (L + Matrix<Scalar>::Identity(K, K)) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(lbar, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(K - 2);  // ascending order
}

template <typename Scalar>
Scalar spectral_gap(const Topology<Scalar>& topology) {
  return spectral_gap(topology.L);
}

/// Check of the combination-matrix requirements; returns the first violated
/// property name, or an empty string.
template <typename Scalar>
std::string check_combination_matrix(const Matrix<Scalar>& L, Scalar tol = Scalar(1e-12)) {
  const Index K = L.rows();
  if (K == 0 || L.cols() != K) return "square";
  if (!L.allFinite() || (L.array() < 0).any()) return "nonnegative";
  if (max_abs_or_zero(Matrix<Scalar>(L - L.transpose())) > tol) return "symmetric";
  const Vector<Scalar> ones = Vector<Scalar>::Ones(K);
  if ((L * ones - ones).cwiseAbs().maxCoeff() > tol ||
      (L.transpose() * ones - ones).cwiseAbs().maxCoeff() > tol)
    return "doubly-stochastic";
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(L);
  const auto& ev = es.eigenvalues();
  if (ev(0) <= Scalar(-1) + Scalar(1e-10) || ev(K - 1) > Scalar(1) + Scalar(1e-10))
    return "spectrum";
  // The unit eigenvalue must be simple with eigenvector 1/sqrt(K).
  if (K > 1 && ev(K - 2) > Scalar(1) - Scalar(1e-10)) return "spectrum";
  const Vector<Scalar> u = es.eigenvectors().col(K - 1);
  if ((u.cwiseAbs().array() - Scalar(1) / std::sqrt(Scalar(K))).abs().maxCoeff() > Scalar(1e-8))
    return "unit-eigenvector";
  return {};
}

template <typename Scalar>
void validate(const Topology<Scalar>& topology) {
  const std::string bad = check_combination_matrix(topology.L);
  require(bad.empty(), ErrorCode::invalid_argument, "topology: combination matrix fails " + bad);
  require(topology.K == 1 || (topology.L.diagonal().array() > 0).any(), ErrorCode::invalid_argument,
          "topology: no agent has a self-loop");
}

/// Metropolis weights l_nk = 1 / max(|N_n|, |N_k|) on edges, diagonal filling
/// each column to one.
template <typename Scalar = double>
Topology<Scalar> metropolis(const Adjacency& adjacency) {
  const Index K = adjacency.rows();
  require(K >= 1 && adjacency.cols() == K, ErrorCode::invalid_argument,
          "metropolis: adjacency must be square and nonempty");
  require(adjacency == adjacency.transpose(), ErrorCode::invalid_argument,
          "metropolis: adjacency must be symmetric");
  Topology<Scalar> topo;
  topo.K = K;
  topo.adjacency = adjacency;
  topo.adjacency.diagonal().setZero();
  require(connected(topo.adjacency), ErrorCode::not_connected, "metropolis: graph is disconnected");
  topo.L = Matrix<Scalar>::Zero(K, K);
  for (Index k = 0; k < K; ++k) {
    Scalar off = 0;
    for (Index n = 0; n < K; ++n) {
      if (n == k || !topo.adjacency(n, k)) continue;
      topo.L(n, k) = Scalar(1) / static_cast<Scalar>(std::max(topo.degree(n), topo.degree(k)));
      off += topo.L(n, k);
    }
    topo.L(k, k) = Scalar(1) - off;
  }
  validate(topo);
  topo.lambda2 = spectral_gap(topo.L);
  return topo;
}

/// Agents placed uniformly on the unit square, linked within `radius`;
/// placements are redrawn until the graph is connected.
template <typename Scalar = double>
Topology<Scalar> random_geometric(Index K, double radius, std::uint64_t seed,
                                  int max_attempts = 1000) {
  require(K >= 2, ErrorCode::invalid_argument, "random_geometric: need at least two agents");
  require(radius >= 0, ErrorCode::invalid_argument, "random_geometric: negative radius");
  Rng rng(seed);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<std::pair<double, double>> pos(static_cast<std::size_t>(K));
    for (auto& p : pos) {
      p.first = rng.uniform();
      p.second = rng.uniform();
    }
    Adjacency adj = Adjacency::Zero(K, K);
    for (Index i = 0; i < K; ++i)
      for (Index j = i + 1; j < K; ++j) {
        const double dx = pos[static_cast<std::size_t>(i)].first - pos[static_cast<std::size_t>(j)].first;
        const double dy = pos[static_cast<std::size_t>(i)].second - pos[static_cast<std::size_t>(j)].second;
        if (std::sqrt(dx * dx + dy * dy) < radius) adj(i, j) = adj(j, i) = 1;
      }
    if (!connected(adj)) continue;
    auto topo = metropolis<Scalar>(adj);
    topo.positions = std::move(pos);
    return topo;
  }
  throw Error(ErrorCode::generation_failed,
              "random_geometric: no connected placement within the attempt budget");
}

inline Adjacency ring_adjacency(Index K) {
  Adjacency adj = Adjacency::Zero(K, K);
  if (K < 2) return adj;
  for (Index k = 0; k < K; ++k) {
    const Index next = (k + 1) % K;
    if (next != k) adj(k, next) = adj(next, k) = 1;
  }
  return adj;
}

inline Adjacency complete_adjacency(Index K) {
  Adjacency adj = Adjacency::Ones(K, K);
  adj.diagonal().setZero();
  return adj;
}

/// Center 0 linked to every other agent.
inline Adjacency star_adjacency(Index K) {
  Adjacency adj = Adjacency::Zero(K, K);
  for (Index k = 1; k < K; ++k) adj(0, k) = adj(k, 0) = 1;
  return adj;
}

template <typename Scalar = double>
Topology<Scalar> single_agent() {
  return metropolis<Scalar>(Adjacency::Zero(1, 1));
}

}  // namespace fdpe

#endif  // FDPE_NETWORK_HPP
