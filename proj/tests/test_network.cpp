#include "doctest.h"
#include "helpers.hpp"

#include "fdpe/network.hpp"

using namespace fdpe;
using testing::Mat;
using testing::Vec;

TEST_CASE("metropolis: two connected nodes") {
  const auto t = metropolis<double>(complete_adjacency(2));
  CHECK((t.L - Mat::Constant(2, 2, 0.5)).norm() == 0);
}

TEST_CASE("metropolis: three-node star by hand") {
  const auto t = metropolis<double>(star_adjacency(3));
  CHECK(t.L(0, 0) == doctest::Approx(1.0 / 3));
  CHECK(t.L(1, 1) == doctest::Approx(2.0 / 3));
  CHECK(t.L(2, 2) == doctest::Approx(2.0 / 3));
  CHECK(t.L(0, 1) == doctest::Approx(1.0 / 3));
  CHECK(t.L(1, 0) == doctest::Approx(1.0 / 3));
  CHECK(t.L(1, 2) == 0.0);
}

TEST_CASE("metropolis: complete graph is uniform") {
  const auto t = metropolis<double>(complete_adjacency(6));
  CHECK((t.L - Mat::Constant(6, 6, 1.0 / 6)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(spectral_gap(t) == doctest::Approx(0.5));
}

TEST_CASE("metropolis: disconnected graph rejected") {
  Adjacency adj = Adjacency::Zero(4, 4);
  adj(0, 1) = adj(1, 0) = 1;
  adj(2, 3) = adj(3, 2) = 1;
  try {
    metropolis<double>(adj);
    FAIL("disconnected graph accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_connected);
  }
}

TEST_CASE("metropolis: asymmetric adjacency rejected") {
  Adjacency adj = Adjacency::Zero(3, 3);
  adj(0, 1) = 1;
  CHECK_THROWS_AS(metropolis<double>(adj), Error);
}

TEST_CASE("random_geometric: experiment family is valid") {
  const auto t = random_geometric<double>(15, 0.27, 4);
  CHECK(t.K == 15);
  CHECK(t.positions.size() == 15);
  CHECK(check_combination_matrix(t.L).empty());
  for (Index i = 0; i < 15; ++i)
    for (Index j = i + 1; j < 15; ++j) {
      const double dx = t.positions[i].first - t.positions[j].first;
      const double dy = t.positions[i].second - t.positions[j].second;
      CHECK(bool(t.adjacency(i, j)) == (std::sqrt(dx * dx + dy * dy) < 0.27));
    }
}

TEST_CASE("random_geometric: huge radius gives the complete graph") {
  const auto t = random_geometric<double>(7, 1.5, 1);
  CHECK(t.adjacency.sum() == 7 * 6);
}

TEST_CASE("random_geometric: tiny radius exhausts the budget") {
  try {
    random_geometric<double>(6, 1e-6, 1, 50);
    FAIL("expected generation failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::generation_failed);
  }
}

TEST_CASE("spectral_gap: single agent and ring of four") {
  const auto one = single_agent<double>();
  CHECK(one.L(0, 0) == 1.0);
  CHECK(spectral_gap(one) == 0.0);

  const auto ring = metropolis<double>(ring_adjacency(4));
  // Ring of four with Metropolis weights: every entry on the ring is 1/3.
  CHECK(ring.L(0, 1) == doctest::Approx(1.0 / 3));
  CHECK(ring.L(0, 0) == doctest::Approx(1.0 / 3));
  Eigen::EigenSolver<Mat> es((ring.L + Mat::Identity(4, 4)) / 2);
  std::vector<double> ev;
  for (Index i = 0; i < 4; ++i) ev.push_back(es.eigenvalues()(i).real());
  std::sort(ev.begin(), ev.end());
  CHECK(spectral_gap(ring) == doctest::Approx(ev[2]).epsilon(1e-12));
}

TEST_CASE("combination matrices: properties over random connected graphs") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto t = random_geometric<double>(10, 0.45, seed);
    const Vec ones = Vec::Ones(10);
    CHECK((t.L * ones - ones).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((t.L.transpose() * ones - ones).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat> es((t.L + Mat::Identity(10, 10)) / 2);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
    CHECK(es.eigenvalues().maxCoeff() <= 1 + 1e-12);
    CHECK(t.lambda2 < 1.0);
  }
}

TEST_CASE("check_combination_matrix: names the failing property") {
  Mat L = metropolis<double>(ring_adjacency(5)).L;
  CHECK(check_combination_matrix(L).empty());
  Mat skew = L;
  skew(0, 1) += 0.1;
  skew(0, 0) -= 0.1;
  CHECK(check_combination_matrix(skew) == "symmetric");
  Mat scaled = 0.9 * L;
  CHECK(check_combination_matrix(scaled) == "doubly-stochastic");
  Mat split = Mat::Identity(4, 4);
  CHECK(check_combination_matrix(split) == "spectrum");
}

TEST_CASE("V squared equals (I - L)/2 for the symmetric square root") {
  const auto t = random_geometric<double>(8, 0.6, 3);
  // V = U diag(sqrt((1 - lambda)/2)) U^T.
  Eigen::SelfAdjointEigenSolver<Mat> es(t.L);
  const Vec s = ((Vec::Ones(8) - es.eigenvalues()) / 2).cwiseMax(0).cwiseSqrt();
  const Mat V = es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
  CHECK((V * V - (Mat::Identity(8, 8) - t.L) / 2).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((V * Vec::Ones(8)).norm() < 1e-12);
}
