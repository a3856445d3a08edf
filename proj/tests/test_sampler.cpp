#include "doctest.h"
#include "helpers.hpp"

#include "fdpe/sampler.hpp"

using namespace fdpe;
using testing::Mat;
using testing::Vec;

TEST_CASE("collect: on-policy data gives unit ratios") {
  const auto mdp = testing::dense_mdp(5, 3, 1);
  const auto pi = testing::dense_policy(5, 3, 2);
  const auto data = collect(mdp, pi, pi, 200, 7);
  CHECK(data.size() == 200);
  const auto table = ratios(data, 4);
  CHECK((table.xi.array() == 1.0).all());
}

TEST_CASE("collect: logged rewards and actions come from the model") {
  const auto mdp = testing::dense_mdp(4, 2, 3);
  const auto pi = testing::dense_policy(4, 2, 4);
  const auto data = collect(mdp, pi, pi, 300, 9);
  for (Index t = 0; t < data.size(); ++t) {
    const Index s = data.states[t], a = data.actions[t], s2 = data.next_state(t);
    CHECK(data.rewards[t] == mdp.rewards[a](s, s2));
    CHECK(mdp.transitions[a](s, s2) > 0);
  }
}

TEST_CASE("collect: same seed replays identically") {
  const auto mdp = testing::dense_mdp(4, 2, 3);
  const auto pi = testing::dense_policy(4, 2, 4);
  const auto a = collect(mdp, pi, pi, 100, 5);
  const auto b = collect(mdp, pi, pi, 100, 5);
  CHECK(a.states == b.states);
  CHECK(a.actions == b.actions);
  CHECK(a.rewards == b.rewards);
}

TEST_CASE("collect: N = H leaves no usable samples") {
  const auto mdp = testing::dense_mdp(4, 2, 3);
  const auto pi = testing::dense_policy(4, 2, 4);
  const auto data = collect(mdp, pi, pi, 5, 1);
  try {
    ratios(data, 5);
    FAIL("expected insufficient data");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::insufficient_data);
  }
}

TEST_CASE("collect: unsupported target action is flagged") {
  const auto mdp = testing::dense_mdp(3, 2, 3);
  Mat phi = Mat::Constant(3, 2, 0.5);
  phi.row(1) << 1.0, 0.0;
  const Policy<double> behavior{phi};
  const auto target = testing::dense_policy(3, 2, 6);
  try {
    collect(mdp, behavior, target, 500, 2);
    FAIL("expected unsupported-off-policy");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unsupported_off_policy);
  }
  CollectOptions opts;
  opts.allow_unsupported = true;
  const auto data = collect(mdp, behavior, target, 500, 2, opts);
  CHECK(data.support_violations > 0);
}

TEST_CASE("collect: visit frequencies match the stationary distribution") {
  const Index S = 6;
  const auto mdp = testing::dense_mdp(S, 2, 12);
  const auto phi = testing::dense_policy(S, 2, 13);
  const auto data = collect(mdp, phi, phi, 1000000, 3);
  Vec freq = Vec::Zero(S);
  for (Index s : data.states) freq(s) += 1;
  freq /= static_cast<double>(data.size());
  const Vec d = stationary_distribution(induce_chain(mdp, phi));
  CHECK(0.5 * (freq - d).cwiseAbs().sum() < 0.01);
}

TEST_CASE("ratios: single-step horizon and direct product oracle") {
  const auto mdp = testing::dense_mdp(5, 3, 21);
  const auto phi = testing::dense_policy(5, 3, 22);
  const auto pi = testing::dense_policy(5, 3, 23);
  const auto data = collect(mdp, phi, pi, 20, 4);

  const auto one = ratios(data, 1);
  for (Index t = 0; t < one.usable(); ++t) {
    const Index s = data.states[t], a = data.actions[t];
    CHECK(one(t, 1) == doctest::Approx(pi.probs(s, a) / phi.probs(s, a)).epsilon(1e-15));
  }

  const auto table = ratios(data, 5);
  CHECK(table.usable() == 15);
  for (Index t = 0; t < table.usable(); ++t)
    for (Index h = 0; h <= 5; ++h) {
      double direct = 1;
      for (Index j = t; j < t + h; ++j)
        direct *= pi.probs(data.states[j], data.actions[j]) / phi.probs(data.states[j], data.actions[j]);
      CHECK(table(t, h) == doctest::Approx(direct).epsilon(1e-13));
    }
}

TEST_CASE("ratios: log-space path for long horizons matches direct products") {
  const auto mdp = testing::dense_mdp(4, 2, 31);
  const auto phi = testing::dense_policy(4, 2, 32);
  const auto pi = testing::dense_policy(4, 2, 33);
  const auto data = collect(mdp, phi, pi, 60, 8);
  const auto table = ratios(data, 40);
  for (Index t = 0; t < table.usable(); ++t) {
    double direct = 1;
    for (Index j = t; j < t + 40; ++j)
      direct *= pi.probs(data.states[j], data.actions[j]) / phi.probs(data.states[j], data.actions[j]);
    CHECK(table(t, 40) == doctest::Approx(direct).epsilon(1e-11));
  }
}

TEST_CASE("restricted_policy: whole grid is unchanged") {
  const GridShape grid{4, 4};
  Rng rng(1);
  const Policy<double> base{random_policy_probs<double>(16, 4, rng)};
  std::vector<Index> all(16);
  for (Index s = 0; s < 16; ++s) all[s] = s;
  CHECK((restricted_policy(base, all, grid).probs - base.probs).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("restricted_policy: interior region corner loses two actions") {
  const GridShape grid{4, 4};
  Rng rng(2);
  const Policy<double> base{random_policy_probs<double>(16, 4, rng)};
  // Region {1,2} x {1,2}; its top-left corner (1,1) cannot go up or left.
  const std::vector<Index> region{grid.state(1, 1), grid.state(2, 1), grid.state(1, 2), grid.state(2, 2)};
  const auto out = restricted_policy(base, region, grid);
  const Index corner = grid.state(1, 1);
  CHECK(out.probs(corner, kUp) == 0.0);
  CHECK(out.probs(corner, kLeft) == 0.0);
  CHECK(out.probs.row(corner).sum() == doctest::Approx(1.0));
  const double keep = base.probs(corner, kDown) + base.probs(corner, kRight);
  CHECK(out.probs(corner, kDown) == doctest::Approx(base.probs(corner, kDown) / keep));
  // Outside the region nothing changes.
  CHECK(out.probs.row(0) == base.probs.row(0));
  CHECK(is_row_stochastic(out.probs));
}

TEST_CASE("restricted_policy: 15x15 grid in 3x3 regions") {
  const GridShape grid{15, 15};
  Rng rng(3);
  const Policy<double> base{random_policy_probs<double>(225, 4, rng)};
  const auto regions = grid_regions(grid, 3, 3);
  REQUIRE(regions.size() == 9);
  for (const auto& r : regions) {
    CHECK(r.size() == 25);
    const auto p = restricted_policy(base, r, grid);
    CHECK(is_row_stochastic(p.probs));
  }
}

TEST_CASE("restricted_policy: isolated interior state is an invalid region") {
  const GridShape grid{3, 3};
  Rng rng(4);
  const Policy<double> base{random_policy_probs<double>(9, 4, rng)};
  try {
    restricted_policy(base, {grid.state(1, 1)}, grid);
    FAIL("expected invalid-region");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::invalid_region);
  }
}
