#ifndef FDPE_ESTIMATORS_HPP
#define FDPE_ESTIMATORS_HPP

#include "fdpe/core.hpp"
#include "fdpe/features.hpp"
#include "fdpe/sampler.hpp"

#include <memory>
#include <string>
#include <vector>

namespace fdpe {

template <typename Scalar = double>
struct TraceParams {
  Scalar gamma = Scalar(0.93);
  Scalar lambda = Scalar(0);
  Index horizon = 1;

  void validate() const {
    require(gamma >= 0 && gamma < 1, ErrorCode::invalid_argument, "trace: gamma must lie in [0,1)");
    require(lambda >= 0 && lambda <= 1, ErrorCode::invalid_argument,
            "trace: lambda must lie in [0,1]");
    require(horizon >= 1, ErrorCode::invalid_argument, "trace: horizon must be positive");
  }
};

enum class UMode { identity, c_hat };

inline const char* to_string(UMode mode) { return mode == UMode::identity ? "identity" : "c_hat"; }

/// Empirical problem matrices for one agent, or their tau-weighted aggregate.
template <typename Scalar = double>
struct EstimateSet {
  Matrix<Scalar> A;
  Vector<Scalar> b;
  Matrix<Scalar> C;
  Matrix<Scalar> U;
  Index n_samples = 0;
  Scalar tau = Scalar(1);

  Index dim() const { return b.size(); }
};

/// rho^H_{t,n} for n = 0..H of one usable sample, by the backward recursion
/// rho_H = xi_H, rho_n = (1-lambda) xi_{n+1} + lambda rho_{n+1}.
template <typename Scalar>
Vector<Scalar> trace_weights(const RatioTable<Scalar>& table, Index t, Scalar lambda) {
  const Index H = table.horizon();
  Vector<Scalar> rho(H + 1);
  rho(H) = table(t, H);
  for (Index n = H - 1; n >= 0; --n)
    rho(n) = (Scalar(1) - lambda) * table(t, n + 1) + lambda * rho(n + 1);
  return rho;
}

/// Rank-one factors of sample n: A_n = x y^T, b_n = c x, C_n = x x^T.
template <typename Scalar>
struct SampleFactors {
  Vector<Scalar> x;
  Vector<Scalar> y;
  Scalar c = 0;
};

template <typename Scalar>
SampleFactors<Scalar> sample_factors(const Dataset<Scalar>& data, const RatioTable<Scalar>& table,
                                     const FeatureMap<Scalar>& features, Index n,
                                     const TraceParams<Scalar>& params) {
  const Index H = params.horizon;
  require(table.horizon() == H, ErrorCode::invalid_argument,
          "estimators: ratio table horizon differs from the trace horizon");
  require(n >= 0 && n < table.usable(), ErrorCode::index_out_of_range,
          "estimators: sample index " + std::to_string(n) + " outside the usable range [0, " +
              std::to_string(table.usable()) + ")");
  const Scalar g = params.gamma;
  const Scalar l = params.lambda;
  const Scalar gl = g * l;
  const auto state = [&](Index t) { return data.states[static_cast<std::size_t>(t)]; };
  const Vector<Scalar> rho = trace_weights(table, n, l);

  SampleFactors<Scalar> f;
  f.x = features.row(state(n)).transpose();
  f.y = rho(0) * f.x;
  Scalar power = 1;  // (gamma lambda)^h
  for (Index h = 0; h < H; ++h) {
    f.y.noalias() -= (g * (Scalar(1) - l) * power * table(n, h + 1)) *
                     features.row(state(n + h + 1)).transpose();
    f.c += power * rho(h) * data.rewards[static_cast<std::size_t>(n + h)];
    power *= gl;
  }
  f.y.noalias() -= (power * table(n, H)) * features.row(state(n + H)).transpose();
  return f;
}

template <typename Scalar>
Matrix<Scalar> sample_A(const Dataset<Scalar>& data, const RatioTable<Scalar>& table,
                        const FeatureMap<Scalar>& features, Index n,
                        const TraceParams<Scalar>& params) {
  const auto f = sample_factors(data, table, features, n, params);
  return f.x * f.y.transpose();
}

template <typename Scalar>
Vector<Scalar> sample_b(const Dataset<Scalar>& data, const RatioTable<Scalar>& table,
                        const FeatureMap<Scalar>& features, Index n,
                        const TraceParams<Scalar>& params) {
  const auto f = sample_factors(data, table, features, n, params);
  return f.c * f.x;
}

template <typename Scalar>
Matrix<Scalar> sample_C(const Dataset<Scalar>& data, const RatioTable<Scalar>& table,
                        const FeatureMap<Scalar>& features, Index n) {
  require(n >= 0 && n < table.usable(), ErrorCode::index_out_of_range,
          "estimators: sample index outside the usable range");
  const Vector<Scalar> x = features.row(data.states[static_cast<std::size_t>(n)]).transpose();
  return x * x.transpose();
}

/// Row-stacked rank-one factors of every usable sample. The feature and trace
/// rows are shared (MARL agents reuse them with their own reward column).
template <typename Scalar = double>
struct SampleBank {
  std::shared_ptr<const Matrix<Scalar>> x;  // usable x M
  std::shared_ptr<const Matrix<Scalar>> y;  // usable x M
  Vector<Scalar> c;                         // usable

  Index size() const { return c.size(); }
  Index dim() const { return x->cols(); }

  /// Mean estimates over rows [lo, lo+len).
  EstimateSet<Scalar> estimates(Index lo, Index len, UMode mode, Scalar tau = Scalar(1)) const {
    require(len >= 1 && lo >= 0 && lo + len <= size(), ErrorCode::index_out_of_range,
            "sample bank: range outside the usable samples");
    const auto X = x->middleRows(lo, len);
    const auto Y = y->middleRows(lo, len);
    const Scalar inv = Scalar(1) / static_cast<Scalar>(len);
    EstimateSet<Scalar> est;
    est.A = (X.transpose() * Y) * inv;
    est.b = (X.transpose() * c.segment(lo, len)) * inv;
    est.C = (X.transpose() * X) * inv;
    est.U = mode == UMode::identity ? Matrix<Scalar>::Identity(dim(), dim()) : est.C;
    est.n_samples = len;
    est.tau = tau;
    return est;
  }

  EstimateSet<Scalar> estimates(UMode mode, Scalar tau = Scalar(1)) const {
    return estimates(0, size(), mode, tau);
  }
};

template <typename Scalar>
SampleBank<Scalar> build_bank(const Dataset<Scalar>& data, const FeatureMap<Scalar>& features,
                              const TraceParams<Scalar>& params) {
  params.validate();
  const RatioTable<Scalar> table = ratios(data, params.horizon);
  const Index n = table.usable();
  const Index M = features.num_features();
  auto x = std::make_shared<Matrix<Scalar>>(n, M);
  auto y = std::make_shared<Matrix<Scalar>>(n, M);
  Vector<Scalar> c(n);
  for (Index t = 0; t < n; ++t) {
    const auto f = sample_factors(data, table, features, t, params);
    x->row(t) = f.x.transpose();
    y->row(t) = f.y.transpose();
    c(t) = f.c;
  }
  return SampleBank<Scalar>{std::move(x), std::move(y), std::move(c)};
}

/// Same states and actions as `shared`'s source, rewards from `data`.
template <typename Scalar>
SampleBank<Scalar> rebank_rewards(const SampleBank<Scalar>& shared, const Dataset<Scalar>& data,
                                  const TraceParams<Scalar>& params) {
  const RatioTable<Scalar> table = ratios(data, params.horizon);
  require(table.usable() == shared.size(), ErrorCode::invalid_argument,
          "rebank_rewards: dataset length differs from the shared bank");
  const Scalar gl = params.gamma * params.lambda;
  Vector<Scalar> c(shared.size());
  for (Index t = 0; t < shared.size(); ++t) {
    const Vector<Scalar> rho = trace_weights(table, t, params.lambda);
    Scalar acc = 0, power = 1;
    for (Index h = 0; h < params.horizon; ++h) {
      acc += power * rho(h) * data.rewards[static_cast<std::size_t>(t + h)];
      power *= gl;
    }
    c(t) = acc;
  }
  return SampleBank<Scalar>{shared.x, shared.y, std::move(c)};
}

template <typename Scalar>
EstimateSet<Scalar> batch_estimates(const Dataset<Scalar>& data, const FeatureMap<Scalar>& features,
                                    const TraceParams<Scalar>& params, Scalar tau, UMode mode) {
  require(data.size() > params.horizon, ErrorCode::insufficient_data,
          "batch_estimates: need N > H samples");
  return build_bank(data, features, params).estimates(mode, tau);
}

// ---------------------------------------------------------------------------
// Aggregation.

template <typename Scalar = double>
struct AggregateReport {
  EstimateSet<Scalar> set;
  Scalar c_lambda_min = 0;  // smallest eigenvalue of aggregate C
  Scalar a_sigma_min = 0;   // smallest singular value of aggregate A
  bool assumption_ok = false;
};

/// Relative thresholds below which the aggregate is treated as singular.
inline constexpr double kAssumptionTol = 1e-10;

template <typename Scalar>
bool invertibility_holds(const EstimateSet<Scalar>& set, Scalar* c_min = nullptr,
                       Scalar* a_min = nullptr) {
  const Scalar cmin = lambda_min_symmetric(set.C);
  const Scalar cmax = lambda_max_symmetric(set.C);
  Eigen::JacobiSVD<Matrix<Scalar>> svd(set.A);
  const auto& sv = svd.singularValues();
  const Scalar amin = sv(sv.size() - 1);
  if (c_min) *c_min = cmin;
  if (a_min) *a_min = amin;
  return cmax > 0 && cmin > Scalar(kAssumptionTol) * cmax && sv(0) > 0 &&
         amin > Scalar(kAssumptionTol) * sv(0);
}

/// tau-weighted sum of agent estimates. A violation of the positivity and
/// invertibility requirements is reported through the diagnostic sink.
template <typename Scalar>
AggregateReport<Scalar> aggregate(const std::vector<EstimateSet<Scalar>>& sets) {
  require(!sets.empty(), ErrorCode::invalid_argument, "aggregate: no estimate sets");
  const Index M = sets.front().dim();
  AggregateReport<Scalar> report;
  auto& agg = report.set;
  agg.A = Matrix<Scalar>::Zero(M, M);
  agg.b = Vector<Scalar>::Zero(M);
  agg.C = Matrix<Scalar>::Zero(M, M);
  agg.U = Matrix<Scalar>::Zero(M, M);
  agg.tau = 0;
  for (const auto& s : sets) {
    require(s.dim() == M && s.A.rows() == M && s.C.rows() == M && s.U.rows() == M,
            ErrorCode::invalid_argument, "aggregate: estimate sets disagree on dimension");
    agg.A += s.tau * s.A;
    agg.b += s.tau * s.b;
    agg.C += s.tau * s.C;
    agg.U += s.tau * s.U;
    agg.n_samples += s.n_samples;
    agg.tau += s.tau;
  }
  report.assumption_ok = invertibility_holds(agg, &report.c_lambda_min, &report.a_sigma_min);
  if (!report.assumption_ok)
    warn("assumption-violation: aggregate C min eigenvalue " +
         std::to_string(static_cast<double>(report.c_lambda_min)) + ", aggregate A min singular value " +
         std::to_string(static_cast<double>(report.a_sigma_min)));
  return report;
}

/// Stacked gradient [eta U (theta - theta_p) - A^T omega ; A theta - b + C omega]
/// of the local primal-dual objective.
template <typename Scalar>
Vector<Scalar> local_gradient(const Vector<Scalar>& theta, const Vector<Scalar>& omega,
                              const EstimateSet<Scalar>& est, Scalar eta,
                              const Vector<Scalar>& theta_p) {
  const Index M = est.dim();
  require(theta.size() == M && omega.size() == M && theta_p.size() == M,
          ErrorCode::invalid_argument, "local_gradient: dimension mismatch");
  Vector<Scalar> g(2 * M);
  g.head(M).noalias() = eta * (est.U * (theta - theta_p));
  g.head(M).noalias() -= est.A.transpose() * omega;
  g.tail(M).noalias() = est.A * theta;
  g.tail(M) -= est.b;
  g.tail(M).noalias() += est.C * omega;
  return g;
}

/// Per-agent copies of a shared state/action stream carrying local rewards.
template <typename Scalar>
std::vector<Dataset<Scalar>> marl_preprocess(const Dataset<Scalar>& global,
                                             const Matrix<Scalar>& per_agent_rewards) {
  require(per_agent_rewards.rows() >= 1 && per_agent_rewards.cols() == global.size(),
          ErrorCode::invalid_argument,
          "marl_preprocess: reward matrix must be K x N with N matching the dataset");
  std::vector<Dataset<Scalar>> out;
  out.reserve(static_cast<std::size_t>(per_agent_rewards.rows()));
  for (Index k = 0; k < per_agent_rewards.rows(); ++k) {
    Dataset<Scalar> d = global;
    for (Index t = 0; t < global.size(); ++t)
      d.rewards[static_cast<std::size_t>(t)] = per_agent_rewards(k, t);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace fdpe

#endif  // FDPE_ESTIMATORS_HPP
