#ifndef FDPE_FEATURES_HPP
#define FDPE_FEATURES_HPP

#include "fdpe/core.hpp"
#include "fdpe/mdp.hpp"

#include <utility>
#include <vector>

namespace fdpe {

/// S x M feature matrix X; row s is the feature vector of state s.
template <typename Scalar = double>
struct FeatureMap {
  Matrix<Scalar> matrix;

  Index num_states() const { return matrix.rows(); }
  Index num_features() const { return matrix.cols(); }
  auto row(Index s) const { return matrix.row(s); }
};

inline constexpr double kRankTol = 1e-10;

/// Smallest singular value relative to the largest.
template <typename Scalar>
Scalar relative_sigma_min(const Matrix<Scalar>& m) {
  Eigen::JacobiSVD<Matrix<Scalar>> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(0) > 0)) return Scalar(0);
  return sv(sv.size() - 1) / sv(0);
}

template <typename Scalar>
bool full_column_rank(const Matrix<Scalar>& m) {
  return m.allFinite() && m.rows() >= m.cols() && relative_sigma_min(m) > Scalar(kRankTol);
}

template <typename Scalar>
void validate(const FeatureMap<Scalar>& features) {
  require(full_column_rank(features.matrix), ErrorCode::degenerate_features,
          "features: matrix is not full column rank");
}

struct GridPoint {
  double x = 0;
  double y = 0;
};

/// Centers of a uniform n_x by n_y lattice spread over a width x height grid.
inline std::vector<GridPoint> lattice_centers(Index width, Index height, Index n_x, Index n_y) {
  std::vector<GridPoint> centers;
  for (Index j = 0; j < n_y; ++j)
    for (Index i = 0; i < n_x; ++i)
      centers.push_back({(static_cast<double>(i) + 0.5) * static_cast<double>(width) /
                                 static_cast<double>(n_x) - 0.5,
                         (static_cast<double>(j) + 0.5) * static_cast<double>(height) /
                                 static_cast<double>(n_y) - 0.5});
  return centers;
}

/// One RBF per center plus a trailing constant column. The exponent is
/// +0.5*dist^2 unless `negative_exponent` is set, in which case the usual
/// exp(-0.5*dist^2) bump is used.
template <typename Scalar = double>
FeatureMap<Scalar> rbf_grid_features(Index width, Index height,
                                     const std::vector<GridPoint>& centers,
                                     bool negative_exponent = false) {
  require(!centers.empty(), ErrorCode::invalid_argument, "rbf_grid_features: no centers");
  const GridShape grid{width, height};
  const Index S = grid.num_states();
  const Index M = static_cast<Index>(centers.size()) + 1;
  const double sign = negative_exponent ? -1.0 : 1.0;
  FeatureMap<Scalar> features{Matrix<Scalar>(S, M)};
  for (Index s = 0; s < S; ++s) {
    const double x = static_cast<double>(grid.x(s));
    const double y = static_cast<double>(grid.y(s));
    for (Index c = 0; c + 1 < M; ++c) {
      const double dx = x - centers[c].x;
      const double dy = y - centers[c].y;
      features.matrix(s, c) = static_cast<Scalar>(std::exp(sign * 0.5 * (dx * dx + dy * dy)));
    }
    features.matrix(s, M - 1) = Scalar(1);
  }
  validate(features);
  return features;
}

/// Uniform [0,1] features with a trailing constant column; resampled when
/// the draw is rank deficient.
template <typename Scalar = double>
FeatureMap<Scalar> random_features(Index S, Index M, std::uint64_t seed, int max_attempts = 100) {
  require(M >= 1 && M <= S, ErrorCode::invalid_argument,
          "random_features: need 1 <= M <= S");
  Rng rng(seed);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    FeatureMap<Scalar> features{Matrix<Scalar>(S, M)};
    for (Index s = 0; s < S; ++s) {
      for (Index m = 0; m + 1 < M; ++m) features.matrix(s, m) = static_cast<Scalar>(rng.uniform());
      features.matrix(s, M - 1) = Scalar(1);
    }
    if (full_column_rank(features.matrix)) return features;
  }
  throw Error(ErrorCode::degenerate_features,
              "random_features: no full-rank draw within the resampling budget");
}

/// D-weighted projector onto range(X): X (X^T D X)^{-1} X^T D.
template <typename Scalar>
Matrix<Scalar> projection(const FeatureMap<Scalar>& features, const Vector<Scalar>& weights) {
  const auto& X = features.matrix;
  require(weights.size() == X.rows(), ErrorCode::invalid_argument,
          "projection: weight vector has wrong length");
  require((weights.array() >= 0).all(), ErrorCode::invalid_argument,
          "projection: weights must be non-negative");
  const Matrix<Scalar> XtD = X.transpose() * weights.asDiagonal();
  const Matrix<Scalar> gram = XtD * X;
  require(relative_sigma_min(gram) > Scalar(kRankTol), ErrorCode::singular_weighting,
          "projection: X^T D X is singular");
  return X * solve_checked<Scalar>(gram, XtD, "projection", ErrorCode::singular_weighting);
}

}  // namespace fdpe

#endif  // FDPE_FEATURES_HPP
