#include "doctest.h"
#include "helpers.hpp"

#include "fdpe/estimators.hpp"
#include "fdpe/oracle.hpp"

#include <algorithm>

using namespace fdpe;
using testing::Mat;
using testing::Vec;

namespace {

struct Fixture {
  Mdp<double> mdp;
  Policy<double> phi;
  Policy<double> pi;
  FeatureMap<double> X;
  Dataset<double> data;

  Fixture(bool on_policy, Index N, unsigned seed = 1) {
    mdp = testing::dense_mdp(8, 3, seed);
    phi = testing::dense_policy(8, 3, seed + 1);
    pi = on_policy ? phi : testing::dense_policy(8, 3, seed + 2);
    X = random_features<double>(8, 3, seed + 3);
    data = collect(mdp, phi, pi, N, seed + 4);
  }

  Vec x(Index t) const { return X.matrix.row(data.states[t]).transpose(); }
};

/// rho^H_{t,n} straight from its closed-form sum.
double rho_direct(const RatioTable<double>& xi, Index t, Index n, double lambda) {
  const Index H = xi.horizon();
  double acc = 0;
  for (Index h = n; h < H; ++h) acc += (1 - lambda) * std::pow(lambda, double(h - n)) * xi(t, h + 1);
  return acc + std::pow(lambda, double(H - n)) * xi(t, H);
}

}  // namespace

TEST_CASE("sample_A: TD(0) form on-policy with lambda = 0") {
  Fixture f(true, 50);
  const TraceParams<double> p{0.9, 0.0, 3};
  const auto table = ratios(f.data, 3);
  for (Index n : {0, 7, 20}) {
    const Mat expected = f.x(n) * (f.x(n) - 0.9 * f.x(n + 1)).transpose();
    CHECK((sample_A(f.data, table, f.X, n, p) - expected).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("sample_A: lambda = 0 off-policy scales by the one-step ratio") {
  Fixture f(false, 50);
  const TraceParams<double> p{0.9, 0.0, 4};
  const auto table = ratios(f.data, 4);
  for (Index n : {1, 11, 30}) {
    const Mat expected = table(n, 1) * f.x(n) * (f.x(n) - 0.9 * f.x(n + 1)).transpose();
    CHECK((sample_A(f.data, table, f.X, n, p) - expected).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("sample estimators: general lambda against the written-out definitions") {
  Fixture f(false, 60, 5);
  const double g = 0.85, l = 0.7;
  const Index H = 6;
  const TraceParams<double> p{g, l, H};
  const auto table = ratios(f.data, H);
  for (Index n : {0, 13, 40}) {
    Vec y = rho_direct(table, n, 0, l) * f.x(n);
    double c = 0;
    for (Index h = 0; h < H; ++h) {
      y -= g * (1 - l) * std::pow(g * l, double(h)) * table(n, h + 1) * f.x(n + h + 1);
      c += std::pow(g * l, double(h)) * rho_direct(table, n, h, l) * f.data.rewards[n + h];
    }
    y -= std::pow(g * l, double(H)) * table(n, H) * f.x(n + H);
    CHECK((sample_A(f.data, table, f.X, n, p) - f.x(n) * y.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((sample_b(f.data, table, f.X, n, p) - c * f.x(n)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((sample_C(f.data, table, f.X, n) - f.x(n) * f.x(n).transpose()).cwiseAbs().maxCoeff() == 0);
  }
}

TEST_CASE("trace_weights: on-policy weights are exactly one") {
  Fixture f(true, 40);
  const auto table = ratios(f.data, 7);
  for (Index t = 0; t < table.usable(); ++t)
    for (double l : {0.0, 0.3, 1.0}) CHECK((trace_weights(table, t, l).array() == 1.0).all());
}

TEST_CASE("sample_b: single-term horizon and zero rewards") {
  Fixture f(false, 30);
  const auto table = ratios(f.data, 1);
  const TraceParams<double> p{0.9, 0.4, 1};
  for (Index n : {0, 5}) {
    const Vec expected = f.x(n) * table(n, 1) * f.data.rewards[n];
    CHECK((sample_b(f.data, table, f.X, n, p) - expected).cwiseAbs().maxCoeff() < 1e-14);
  }
  auto zero = f.data;
  std::fill(zero.rewards.begin(), zero.rewards.end(), 0.0);
  CHECK(sample_b(zero, table, f.X, 3, p).norm() == 0.0);
}

TEST_CASE("sample_C: trace of a unit feature and zero features") {
  Fixture f(true, 20);
  FeatureMap<double> unit{Mat::Zero(8, 3)};
  unit.matrix.col(1).setOnes();
  const auto table = ratios(f.data, 2);
  CHECK(sample_C(f.data, table, unit, 4).trace() == doctest::Approx(1.0));
  FeatureMap<double> zero{Mat::Zero(8, 3)};
  CHECK(sample_C(f.data, table, zero, 4).norm() == 0.0);
}

TEST_CASE("sample estimators: out-of-range index") {
  Fixture f(true, 20);
  const auto table = ratios(f.data, 5);
  const TraceParams<double> p{0.9, 0.5, 5};
  for (Index n : {Index(-1), Index(15), Index(30)}) {
    try {
      sample_A(f.data, table, f.X, n, p);
      FAIL("expected index error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::index_out_of_range);
    }
  }
}

TEST_CASE("batch_estimates: one usable sample when N = H + 1") {
  Fixture f(false, 5);
  const TraceParams<double> p{0.9, 0.5, 4};
  const auto est = batch_estimates(f.data, f.X, p, 1.0, UMode::identity);
  const auto table = ratios(f.data, 4);
  CHECK(est.n_samples == 1);
  CHECK((est.A - sample_A(f.data, table, f.X, 0, p)).norm() < 1e-15);
  CHECK((est.U - Mat::Identity(3, 3)).norm() == 0);
}

TEST_CASE("batch_estimates: N <= H is insufficient data") {
  Fixture f(false, 4);
  try {
    batch_estimates(f.data, f.X, TraceParams<double>{0.9, 0.5, 4}, 1.0, UMode::identity);
    FAIL("expected insufficient-data");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::insufficient_data);
  }
}

TEST_CASE("batch_estimates: lambda is irrelevant at H = 1") {
  Fixture f(false, 100);
  const auto a = batch_estimates(f.data, f.X, TraceParams<double>{0.9, 1.0, 1}, 1.0, UMode::c_hat);
  const auto b = batch_estimates(f.data, f.X, TraceParams<double>{0.9, 0.0, 1}, 1.0, UMode::c_hat);
  CHECK((a.A - b.A).norm() < 1e-14);
  CHECK((a.b - b.b).norm() < 1e-14);
  CHECK((a.C - b.C).norm() == 0);
  CHECK((a.U - a.C).norm() == 0);
}

TEST_CASE("batch_estimates: average of two halves equals the whole") {
  Fixture f(false, 203);
  const TraceParams<double> p{0.9, 0.6, 3};
  const auto bank = build_bank(f.data, f.X, p);
  REQUIRE(bank.size() == 200);
  const auto whole = bank.estimates(UMode::identity);
  const auto first = bank.estimates(0, 100, UMode::identity);
  const auto second = bank.estimates(100, 100, UMode::identity);
  CHECK(((first.A + second.A) / 2 - whole.A).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(((first.b + second.b) / 2 - whole.b).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(((first.C + second.C) / 2 - whole.C).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("batch_estimates: invariant to sample ordering") {
  Fixture f(false, 80);
  const TraceParams<double> p{0.9, 0.6, 3};
  const auto bank = build_bank(f.data, f.X, p);
  std::vector<Index> perm(bank.size());
  for (Index i = 0; i < bank.size(); ++i) perm[i] = i;
  Rng rng(3);
  rng.shuffle(perm);
  auto x = std::make_shared<Mat>(bank.x->rows(), bank.x->cols());
  auto y = std::make_shared<Mat>(bank.y->rows(), bank.y->cols());
  Vec c(bank.size());
  for (Index i = 0; i < bank.size(); ++i) {
    x->row(i) = bank.x->row(perm[i]);
    y->row(i) = bank.y->row(perm[i]);
    c(i) = bank.c(perm[i]);
  }
  const SampleBank<double> shuffled{x, y, c};
  CHECK((shuffled.estimates(UMode::identity).A - bank.estimates(UMode::identity).A).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((shuffled.estimates(UMode::identity).b - bank.estimates(UMode::identity).b).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("batch_estimates: sample means approach the exact on-policy matrices") {
  const Index S = 8;
  const auto mdp = testing::dense_mdp(S, 2, 40, 0.8);
  const auto pi = testing::dense_policy(S, 2, 41);
  const auto X = random_features<double>(S, 3, 42);
  const TraceParams<double> p{0.8, 0.5, 4};
  const auto data = collect(mdp, pi, pi, 100000 + 4, 43);
  const auto est = batch_estimates(data, X, p, 1.0, UMode::identity);
  const auto chain = induce_chain(mdp, pi);
  const Vec d = stationary_distribution(chain);
  const auto exact = exact_AbC(chain, X, d, 0.8, 0.5, Index(4));
  CHECK(testing::relative_error(est.A, exact.A) < 0.05);
  CHECK(testing::relative_error(est.b, exact.b) < 0.05);
  CHECK(testing::relative_error(est.C, exact.C) < 0.05);
}

TEST_CASE("aggregate: single set, identical sets, weights") {
  Fixture f(false, 100);
  const TraceParams<double> p{0.9, 0.5, 3};
  auto est = batch_estimates(f.data, f.X, p, 1.0, UMode::identity);
  const auto one = aggregate(std::vector<EstimateSet<double>>{est});
  CHECK((one.set.A - est.A).norm() == 0);
  CHECK(one.assumption_ok);

  est.tau = 0.5;
  const auto two = aggregate(std::vector<EstimateSet<double>>{est, est});
  CHECK((two.set.A - 2 * 0.5 * est.A).norm() < 1e-15);
  CHECK((two.set.b - est.b).norm() < 1e-14);
}

TEST_CASE("aggregate: singular aggregate triggers an assumption diagnostic") {
  EstimateSet<double> est;
  est.A = Mat::Zero(2, 2);
  est.A(0, 0) = 1;
  est.b = Vec::Ones(2);
  est.C = est.A;
  est.U = Mat::Identity(2, 2);
  std::vector<std::string> messages;
  const auto saved = diagnostic_sink();
  diagnostic_sink() = [&](const std::string& m) { messages.push_back(m); };
  const auto report = aggregate(std::vector<EstimateSet<double>>{est});
  diagnostic_sink() = saved;
  CHECK_FALSE(report.assumption_ok);
  REQUIRE(messages.size() == 1);
  CHECK(messages[0].find("assumption-violation") != std::string::npos);
  CHECK_THROWS_AS(saddle_point(report.set, 0.0, Vec(Vec::Zero(2))), Error);
}

TEST_CASE("aggregate: mismatched dimensions rejected") {
  EstimateSet<double> a, b;
  a.A = a.C = a.U = Mat::Identity(2, 2);
  a.b = Vec::Zero(2);
  b.A = b.C = b.U = Mat::Identity(3, 3);
  b.b = Vec::Zero(3);
  CHECK_THROWS_AS(aggregate(std::vector<EstimateSet<double>>{a, b}), Error);
}

TEST_CASE("marl_preprocess: shared and cancelling reward streams") {
  Fixture f(true, 120);
  const TraceParams<double> p{0.9, 0.5, 3};
  Mat same(3, f.data.size());
  for (Index k = 0; k < 3; ++k)
    for (Index t = 0; t < f.data.size(); ++t) same(k, t) = f.data.rewards[t];
  auto agents = marl_preprocess(f.data, same);
  REQUIRE(agents.size() == 3);
  std::vector<EstimateSet<double>> sets;
  for (const auto& d : agents) sets.push_back(batch_estimates(d, f.X, p, 1.0 / 3, UMode::identity));
  const auto single = batch_estimates(f.data, f.X, p, 1.0, UMode::identity);
  const auto agg = aggregate(sets).set;
  CHECK((agg.b - single.b).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((agg.A - single.A).cwiseAbs().maxCoeff() < 1e-13);
  for (const auto& s : sets) CHECK((s.A - single.A).norm() == 0);

  Mat opposite(2, f.data.size());
  for (Index t = 0; t < f.data.size(); ++t) {
    opposite(0, t) = f.data.rewards[t];
    opposite(1, t) = -f.data.rewards[t];
  }
  const auto pair = marl_preprocess(f.data, opposite);
  const auto bank = build_bank(pair[0], f.X, p);
  const auto other = rebank_rewards(bank, pair[1], p);
  const auto agg2 = aggregate(std::vector<EstimateSet<double>>{bank.estimates(UMode::identity, 0.5),
                                                                other.estimates(UMode::identity, 0.5)});
  CHECK(agg2.set.b.cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(marl_preprocess(f.data, Mat(Mat::Zero(2, 5))), Error);
}

TEST_CASE("marl_preprocess: rebanked rewards match a fresh bank") {
  Fixture f(false, 90);
  const TraceParams<double> p{0.9, 0.5, 3};
  Mat local = testing::random_matrix(2, f.data.size(), 77);
  const auto agents = marl_preprocess(f.data, local);
  const auto fresh = build_bank(agents[1], f.X, p);
  const auto shared = rebank_rewards(build_bank(agents[0], f.X, p), agents[1], p);
  CHECK((fresh.c - shared.c).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("local_gradient: substitution cases") {
  Fixture f(false, 100);
  const auto est = batch_estimates(f.data, f.X, TraceParams<double>{0.9, 0.5, 3}, 1.0, UMode::identity);
  const Vec theta = testing::random_vector(3, 1);
  const Vec zero = Vec::Zero(3);
  const Vec g = local_gradient(theta, zero, est, 0.0, zero);
  CHECK(g.head(3).norm() == 0);
  CHECK((g.tail(3) - (est.A * theta - est.b)).norm() < 1e-14);
}
