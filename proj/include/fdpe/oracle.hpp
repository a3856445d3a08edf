#ifndef FDPE_ORACLE_HPP
#define FDPE_ORACLE_HPP

#include "fdpe/core.hpp"
#include "fdpe/estimators.hpp"
#include "fdpe/features.hpp"
#include "fdpe/mdp.hpp"

#include <boost/math/tools/minima.hpp>

#include <string>
#include <vector>

namespace fdpe {

template <typename Scalar>
Scalar rho1(Scalar gamma, Scalar lambda, Index horizon) {
  const Scalar gl = gamma * lambda;
  return ((Scalar(1) - lambda) * gamma + (Scalar(1) - gamma) * std::pow(gl, Scalar(horizon))) /
         (Scalar(1) - gl);
}

/// Multi-step operators of the truncated lambda-weighted Bellman equation
/// v = Gamma2 r + rho1 Gamma1 v.
template <typename Scalar = double>
struct BellmanOperators {
  Scalar rho1 = 0;
  /// Right-stochastic Gamma1. When rho1 = 0 (gamma = 0) it is undefined and
  /// set to P by convention; `rho1_gamma1` is always exact.
  Matrix<Scalar> Gamma1;
  Matrix<Scalar> Gamma2;
  Matrix<Scalar> rho1_gamma1;
  Scalar gamma = 0;
  Scalar lambda = 0;
  Index horizon = 1;
};

template <typename Scalar>
BellmanOperators<Scalar> bellman_operators(const MarkovChain<Scalar>& chain, Scalar gamma,
                                           Scalar lambda, Index horizon) {
  TraceParams<Scalar>{gamma, lambda, horizon}.validate();
  const Index S = chain.num_states();
  const Matrix<Scalar>& P = chain.transition;
  const Matrix<Scalar> I = Matrix<Scalar>::Identity(S, S);
  const Matrix<Scalar> step = (gamma * lambda) * P;

  // Gamma2 = sum_{n<H} (gamma lambda P)^n, Horner form.
  Matrix<Scalar> gamma2 = I;
  for (Index n = 1; n < horizon; ++n) gamma2 = I + step * gamma2;
  Matrix<Scalar> step_power = I;
  for (Index n = 0; n < horizon; ++n) step_power = step_power * step;

  BellmanOperators<Scalar> ops;
  ops.gamma = gamma;
  ops.lambda = lambda;
  ops.horizon = horizon;
  ops.rho1 = rho1(gamma, lambda, horizon);
  ops.Gamma2 = std::move(gamma2);
  ops.rho1_gamma1 = ((Scalar(1) - lambda) * gamma) * (P * ops.Gamma2) + step_power;
  ops.Gamma1 = ops.rho1 > 0 ? Matrix<Scalar>(ops.rho1_gamma1 / ops.rho1) : P;
  return ops;
}

/// Exact counterparts of the empirical estimates, plus the reference solutions.
template <typename Scalar = double>
struct ExactProblem {
  Matrix<Scalar> A;
  Vector<Scalar> b;
  Matrix<Scalar> C;
  Vector<Scalar> D;  // diagonal weights
  Vector<Scalar> value;
  Vector<Scalar> theta_star;
  /// Minimizer with the regularizer off, A^{-1} b.
  Vector<Scalar> theta_o;
  Scalar rho1 = 0;
};

template <typename Scalar>
Vector<Scalar> theta_star(const Vector<Scalar>& v, const FeatureMap<Scalar>& features,
                          const Vector<Scalar>& D) {
  const auto& X = features.matrix;
  require(v.size() == X.rows() && D.size() == X.rows(), ErrorCode::invalid_argument,
          "theta_star: dimension mismatch");
  const Matrix<Scalar> XtD = X.transpose() * D.asDiagonal();
  return solve_checked<Scalar>(Matrix<Scalar>(XtD * X), XtD * v, "theta_star",
                               ErrorCode::singular_weighting);
}

/// A computed by propagating E_n = P^n X through the expanded sum
/// X - gamma(1-lambda) sum_{n<H} (gamma lambda)^n P^{n+1} X - (gamma lambda)^H P^H X.
template <typename Scalar>
Matrix<Scalar> expanded_A(const MarkovChain<Scalar>& chain, const Matrix<Scalar>& X,
                          const Vector<Scalar>& D, Scalar gamma, Scalar lambda, Index horizon) {
  const Scalar gl = gamma * lambda;
  Matrix<Scalar> propagated = X;
  Matrix<Scalar> inner = X;
  Scalar power = 1;
  for (Index n = 0; n < horizon; ++n) {
    propagated = chain.transition * propagated;
    inner -= (gamma * (Scalar(1) - lambda) * power) * propagated;
    power *= gl;
  }
  inner -= power * propagated;
  return X.transpose() * D.asDiagonal() * inner;
}

template <typename Scalar>
ExactProblem<Scalar> exact_AbC(const MarkovChain<Scalar>& chain, const FeatureMap<Scalar>& features,
                               const Vector<Scalar>& D, Scalar gamma, Scalar lambda,
                               Index horizon) {
  const auto& X = features.matrix;
  const Index S = chain.num_states();
  require(X.rows() == S && D.size() == S, ErrorCode::invalid_argument,
          "exact_AbC: dimension mismatch");
  require((D.array() > 0).all(), ErrorCode::assumption_violation,
          "exact_AbC: state weighting must be strictly positive on every state");
  const auto ops = bellman_operators(chain, gamma, lambda, horizon);
  const Matrix<Scalar> XtD = X.transpose() * D.asDiagonal();

  ExactProblem<Scalar> p;
  p.rho1 = ops.rho1;
  p.D = D;
  p.A = XtD * (X - ops.rho1_gamma1 * X);
  p.b = XtD * (ops.Gamma2 * chain.expected_reward);
  p.C = XtD * X;

  const Matrix<Scalar> alt = expanded_A(chain, X, D, gamma, lambda, horizon);
  const Scalar scale = std::max(Scalar(1), max_abs_or_zero(p.A));
  require(max_abs_or_zero(Matrix<Scalar>(alt - p.A)) < Scalar(1e-10) * scale, ErrorCode::internal,
          "exact_AbC: operator and expansion forms of A disagree");

  p.value = value_function(chain, gamma);
  p.theta_star = theta_star(p.value, features, D);
  p.theta_o = solve_checked<Scalar>(p.A, p.b, "exact_AbC: A theta = b");
  return p;
}

/// Minimizer of the regularized surrogate cost:
/// (A^T C^{-1} A + eta U)^{-1} (eta U theta_p + A^T C^{-1} b).
template <typename Scalar>
Vector<Scalar> theta_o(const Matrix<Scalar>& A, const Vector<Scalar>& b, const Matrix<Scalar>& C,
                       Scalar eta, const Matrix<Scalar>& U, const Vector<Scalar>& theta_p) {
  const Matrix<Scalar> CinvA = solve_checked<Scalar>(C, A, "theta_o: C^{-1} A");
  const Vector<Scalar> Cinvb = solve_checked<Scalar>(C, b, "theta_o: C^{-1} b");
  const Matrix<Scalar> lhs = A.transpose() * CinvA + eta * U;
  const Vector<Scalar> rhs = eta * (U * theta_p) + A.transpose() * Cinvb;
  return solve_checked<Scalar>(lhs, rhs, "theta_o");
}

template <typename Scalar>
Vector<Scalar> theta_o(const ExactProblem<Scalar>& p, Scalar eta, const Matrix<Scalar>& U,
                       const Vector<Scalar>& theta_p) {
  return theta_o(p.A, p.b, p.C, eta, U, theta_p);
}

template <typename Scalar = double>
struct SaddlePoint {
  Vector<Scalar> theta;
  Vector<Scalar> omega;
  /// Infinity norm of the objective gradient at (theta, omega).
  Scalar residual = 0;

  Vector<Scalar> stacked() const {
    Vector<Scalar> z(theta.size() + omega.size());
    z << theta, omega;
    return z;
  }
};

template <typename Scalar>
SaddlePoint<Scalar> saddle_point(const EstimateSet<Scalar>& agg, Scalar eta,
                                 const Vector<Scalar>& theta_p) {
  Scalar cmin = 0, amin = 0;
  require(invertibility_holds(agg, &cmin, &amin), ErrorCode::assumption_violation,
          "saddle_point: aggregate C min eigenvalue " + std::to_string(static_cast<double>(cmin)) +
              ", aggregate A min singular value " + std::to_string(static_cast<double>(amin)));
  SaddlePoint<Scalar> sp;
  sp.theta = theta_o(agg.A, agg.b, agg.C, eta, agg.U, theta_p);
  sp.omega = solve_checked<Scalar>(agg.C, Vector<Scalar>(agg.b - agg.A * sp.theta),
                                   "saddle_point: omega");
  sp.residual = local_gradient(sp.theta, sp.omega, agg, eta, theta_p).cwiseAbs().maxCoeff();
  return sp;
}

// ---------------------------------------------------------------------------
// Bias and variance curves against lambda, with the fitted approximations.

template <typename Scalar = double>
struct BiasFit {
  Scalar kappa1 = 0;
  Scalar kappa2 = 0;
  Scalar kappa3 = 0;
  Scalar rms_residual = 0;
};

template <typename Scalar = double>
struct VarianceFit {
  Scalar kappa4 = 0;
  Scalar rms_residual = 0;
};

template <typename Scalar = double>
struct Curve {
  Scalar gamma = 0;
  Index horizon = 1;
  std::vector<Scalar> lambdas;
  std::vector<Scalar> exact_bias;
  std::vector<Scalar> approx_bias;
  std::vector<Scalar> empirical_variance;
  std::vector<Scalar> approx_variance;
  BiasFit<Scalar> bias_fit;
  VarianceFit<Scalar> variance_fit;
};

/// Exact ||theta_o(H, lambda) - theta_star||^2 for each lambda; D is the
/// (aggregate) sampling weighting.
template <typename Scalar>
std::vector<Scalar> exact_bias(const MarkovChain<Scalar>& chain, const FeatureMap<Scalar>& features,
                               const Vector<Scalar>& D, Scalar gamma, Index horizon,
                               const std::vector<Scalar>& lambdas, Scalar eta,
                               const Matrix<Scalar>& U, const Vector<Scalar>& theta_p) {
  std::vector<Scalar> out;
  out.reserve(lambdas.size());
  for (Scalar l : lambdas) {
    const auto p = exact_AbC(chain, features, D, gamma, l, horizon);
    out.push_back((theta_o(p, eta, U, theta_p) - p.theta_star).squaredNorm());
  }
  return out;
}

/// Least-squares fit of sqrt(bias) ~ a rho1/(kappa3 - rho1) + c over lambda,
/// with a one-dimensional Brent search on kappa3 > max rho1 and a, c linear.
/// `prior_distance` is ||theta_p - theta_star||; with eta = 0 the offset c is 0.
template <typename Scalar>
BiasFit<Scalar> fit_bias(Scalar gamma, Index horizon, const std::vector<Scalar>& lambdas,
                         const std::vector<Scalar>& bias, Scalar eta, Scalar prior_distance) {
  require(lambdas.size() == bias.size() && lambdas.size() >= 2, ErrorCode::invalid_argument,
          "fit_bias: need at least two points");
  const Index n = static_cast<Index>(lambdas.size());
  Vector<Scalar> r(n), target(n);
  for (Index i = 0; i < n; ++i) {
    r(i) = rho1(gamma, lambdas[static_cast<std::size_t>(i)], horizon);
    target(i) = std::sqrt(std::max(Scalar(0), bias[static_cast<std::size_t>(i)]));
  }
  const bool offset = eta > 0;
  const Scalar r_max = r.maxCoeff();

  struct Solution {
    Scalar a = 0, c = 0, sse = 0;
  };
  const auto solve_linear = [&](Scalar k3) {
    Matrix<Scalar> design(n, offset ? 2 : 1);
    for (Index i = 0; i < n; ++i) {
      design(i, 0) = r(i) / (k3 - r(i));
      if (offset) design(i, 1) = 1;
    }
    const Vector<Scalar> coef = design.colPivHouseholderQr().solve(target);
    Solution s;
    s.a = coef(0);
    s.c = offset ? coef(1) : Scalar(0);
    s.sse = (design * coef - target).squaredNorm();
    return s;
  };
  // kappa3 = r_max + exp(u).
  const auto objective = [&](double u) {
    return static_cast<double>(solve_linear(r_max + static_cast<Scalar>(std::exp(u))).sse);
  };
  const auto best = boost::math::tools::brent_find_minima(objective, -14.0, 6.0, 40);
  const Scalar k3 = r_max + static_cast<Scalar>(std::exp(best.first));
  const Solution s = solve_linear(k3);

  BiasFit<Scalar> fit;
  fit.kappa3 = k3;
  if (offset && prior_distance > s.c && s.c > 0)
    fit.kappa1 = s.c / (eta * (prior_distance - s.c));
  fit.kappa2 = s.a * (Scalar(1) + fit.kappa1 * eta);
  fit.rms_residual = std::sqrt(s.sse / static_cast<Scalar>(n));
  return fit;
}

template <typename Scalar>
Scalar approx_bias(const BiasFit<Scalar>& fit, Scalar gamma, Scalar lambda, Index horizon,
                   Scalar eta, Scalar prior_distance, bool in_range) {
  const Scalar r = rho1(gamma, lambda, horizon);
  const Scalar denom = Scalar(1) + fit.kappa1 * eta;
  const Scalar first = in_range ? Scalar(0) : fit.kappa2 * r / (denom * (fit.kappa3 - r));
  const Scalar second = fit.kappa1 * eta * prior_distance / denom;
  return (first + second) * (first + second);
}

/// (1 - (gamma lambda)^{2H}) / (1 - (gamma lambda)^2), equal to H at gamma lambda = 1.
template <typename Scalar>
Scalar variance_factor(Scalar gamma, Scalar lambda, Index horizon) {
  const Scalar q = (gamma * lambda) * (gamma * lambda);
  if (q == Scalar(0)) return Scalar(1);
  if (q == Scalar(1)) return Scalar(horizon);
  return (Scalar(1) - std::pow(q, Scalar(horizon))) / (Scalar(1) - q);
}

/// One-constant least-squares fit of variance ~ k factor / (N - H); reports
/// kappa4 = k (1 + kappa1 eta)^2.
template <typename Scalar>
VarianceFit<Scalar> fit_variance(Scalar gamma, Index horizon, Index usable,
                                 const std::vector<Scalar>& lambdas,
                                 const std::vector<Scalar>& variance, Scalar eta, Scalar kappa1) {
  require(lambdas.size() == variance.size() && !lambdas.empty(), ErrorCode::invalid_argument,
          "fit_variance: empty curve");
  Scalar num = 0, den = 0;
  std::vector<Scalar> basis;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    basis.push_back(variance_factor(gamma, lambdas[i], horizon) / static_cast<Scalar>(usable));
    num += basis.back() * variance[i];
    den += basis.back() * basis.back();
  }
  const Scalar k = den > 0 ? num / den : Scalar(0);
  Scalar sse = 0;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const Scalar e = k * basis[i] - variance[i];
    sse += e * e;
  }
  VarianceFit<Scalar> fit;
  fit.kappa4 = k * (Scalar(1) + kappa1 * eta) * (Scalar(1) + kappa1 * eta);
  fit.rms_residual = std::sqrt(sse / static_cast<Scalar>(lambdas.size()));
  return fit;
}

template <typename Scalar>
Scalar approx_variance(const VarianceFit<Scalar>& fit, Scalar kappa1, Scalar gamma, Scalar lambda,
                       Index horizon, Index usable, Scalar eta) {
  const Scalar denom = (Scalar(1) + kappa1 * eta) * (Scalar(1) + kappa1 * eta);
  return fit.kappa4 * variance_factor(gamma, lambda, horizon) /
         (denom * static_cast<Scalar>(usable));
}

/// Empirical E||theta_hat_o - theta_o||^2 per lambda. `trial_errors(t)` returns
/// the squared errors of trial t at every lambda, so one regenerated data set
/// serves the whole grid.
template <typename Scalar, typename TrialFn>
std::vector<Scalar> empirical_variance(std::size_t num_lambdas, int trials, TrialFn&& trial_errors) {
  require(trials >= 1, ErrorCode::invalid_argument, "variance: need at least one trial");
  std::vector<Scalar> out(num_lambdas, Scalar(0));
  for (int t = 0; t < trials; ++t) {
    const std::vector<Scalar> errors = trial_errors(t);
    require(errors.size() == num_lambdas, ErrorCode::internal, "variance: wrong trial length");
    for (std::size_t i = 0; i < num_lambdas; ++i) out[i] += errors[i];
  }
  for (auto& v : out) v /= static_cast<Scalar>(trials);
  return out;
}

}  // namespace fdpe

#endif  // FDPE_ORACLE_HPP
