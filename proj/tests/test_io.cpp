#include "doctest.h"
#include "desk.hpp"
#include "helpers.hpp"

#include "fdpe/io.hpp"

#include <filesystem>
#include <fstream>

using namespace fdpe;
using testing::Mat;
using testing::Vec;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "fdpe_test_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("json: matrices and vectors round trip exactly") {
  const Mat m = testing::random_matrix(3, 5, 1);
  const Vec v = testing::random_vector(4, 2);
  CHECK(io::matrix_from_json(io::to_json(m)) == m);
  CHECK(io::vector_from_json(io::to_json(v)) == v);
  // Text round trip keeps every bit too.
  const auto text = io::to_json(m).dump();
  CHECK(io::matrix_from_json(io::json::parse(text)) == m);
}

TEST_CASE("json: mdp, policy, features and topology round trip") {
  const auto [mdp, pi] = random_mdp<double>(6, 3, 0.5, 0.5, 1.0, 4);
  const auto back = io::mdp_from_json(io::to_json(mdp));
  CHECK(back.num_states == mdp.num_states);
  CHECK(back.gamma == mdp.gamma);
  for (std::size_t a = 0; a < mdp.transitions.size(); ++a) {
    CHECK(back.transitions[a] == mdp.transitions[a]);
    CHECK(back.rewards[a] == mdp.rewards[a]);
  }
  CHECK(io::policy_from_json(io::to_json(pi)).probs == pi.probs);
  const auto X = random_features<double>(6, 3, 5);
  CHECK(io::features_from_json(io::to_json(X)).matrix == X.matrix);
  const auto topo = metropolis<double>(ring_adjacency(5));
  const auto t2 = io::topology_from_json(io::to_json(topo));
  CHECK(t2.K == 5);
  CHECK(t2.L == topo.L);
  CHECK(t2.adjacency == topo.adjacency);
}

TEST_CASE("json: malformed matrix is rejected") {
  auto j = io::to_json(Mat(Mat::Identity(2, 2)));
  j["data"].erase(0);
  CHECK_THROWS_AS(io::matrix_from_json(j), Error);
}

TEST_CASE("dataset csv: write then read restores samples and ratios") {
  const auto [mdp, pi] = random_mdp<double>(8, 3, 0.5, 0.5, 1.0, 6);
  const Policy<double> mu{0.5 * pi.probs + 0.5 * Mat::Constant(8, 3, 1.0 / 3)};
  const auto data = collect(mdp, mu, pi, 120, 7);
  const auto path = scratch("data.csv");
  io::write_dataset_csv(path, data, 4);
  const auto back = io::read_dataset_csv(path, std::make_shared<const Policy<double>>(mu),
                                         std::make_shared<const Policy<double>>(pi));
  CHECK(back.states == data.states);
  CHECK(back.actions == data.actions);
  CHECK(back.rewards == data.rewards);
  CHECK(back.step_ratios == data.step_ratios);
  CHECK(back.seed == data.seed);
}

TEST_CASE("dataset csv: a different target policy is refused") {
  const auto [mdp, pi] = random_mdp<double>(8, 3, 0.5, 0.5, 1.0, 8);
  const auto data = collect(mdp, pi, pi, 50, 9);
  const auto path = scratch("data_hash.csv");
  io::write_dataset_csv(path, data, 2);
  const Policy<double> other{Mat::Constant(8, 3, 1.0 / 3)};
  CHECK_THROWS_AS(io::read_dataset_csv(path, std::make_shared<const Policy<double>>(pi),
                                       std::make_shared<const Policy<double>>(other)),
                  Error);
}

TEST_CASE("trace csv: header and one row per agent and epoch") {
  auto p = testing::small_problem(2, 3, 200);
  p.cfg.J = 4;
  p.cfg.max_epochs = 6;
  const auto tr = fdpe_run(p.banks, p.topo, p.cfg);
  const auto path = scratch("trace.csv");
  io::write_trace_csv(path, tr);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == io::kTraceHeader);
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == static_cast<int>(tr.records.size()));
}

TEST_CASE("format_double: shortest round-trip representation survives parsing") {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e17}) CHECK(std::stod(io::format_double(x)) == x);
}
