#include "doctest.h"

#include "fdpe/config.hpp"

using namespace fdpe;

TEST_CASE("presets parse and describe the desk problems") {
  const auto grid = parse_config(default_config("grid-partition", "desk"));
  CHECK(grid.kind == ExperimentKind::grid_partition);
  CHECK(grid.width == 6);
  CHECK(grid.agents == grid.regions_x * grid.regions_y);
  const auto marl = parse_config(default_config("random-marl", "desk"));
  CHECK(marl.kind == ExperimentKind::random_marl);
  CHECK(marl.states == 20);
  CHECK(marl.horizon == 20);
}

TEST_CASE("full presets are larger than desk presets") {
  const auto desk = parse_config(default_config("grid-partition", "desk"));
  const auto full = parse_config(default_config("grid-partition", "full"));
  CHECK(full.width > desk.width);
  CHECK(full.samples > desk.samples);
}

TEST_CASE("overrides: dotted keys parse JSON values") {
  auto j = default_config("random-marl", "desk");
  apply_override(j, "solver.J=16");
  apply_override(j, "seed=42");
  const auto cfg = parse_config(j);
  CHECK(cfg.J == 16);
  CHECK(cfg.seed == 42);
}

TEST_CASE("overrides: unknown keys and malformed assignments are config errors") {
  auto j = default_config("random-marl", "desk");
  CHECK_THROWS_AS(apply_override(j, "solver.nonsense=1"), Error);
  CHECK_THROWS_AS(apply_override(j, "no-equals-sign"), Error);
}

TEST_CASE("parse_config: out-of-range values are rejected") {
  auto j = default_config("random-marl", "desk");
  apply_override(j, "mdp.gamma=1.5");
  CHECK_THROWS_AS(parse_config(j), Error);
  auto k = default_config("grid-partition", "desk");
  apply_override(k, "network.agents=3");
  CHECK_THROWS_AS(parse_config(k), Error);
}

TEST_CASE("to_json round trips through parse_config") {
  auto j = default_config("grid-partition", "desk");
  apply_override(j, "solver.lambda=0.25");
  const auto cfg = parse_config(j);
  const auto again = parse_config(to_json(cfg));
  CHECK(again.lambda == 0.25);
  CHECK(to_json(again) == to_json(cfg));
}

TEST_CASE("load_config: experiment override selects the preset") {
  const auto cfg = load_config("", {"experiment=\"random-marl\""});
  CHECK(cfg.kind == ExperimentKind::random_marl);
}
