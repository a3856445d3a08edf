#ifndef FDPE_CONFIG_HPP
#define FDPE_CONFIG_HPP

#include "fdpe/estimators.hpp"
#include "fdpe/io.hpp"

#include <string>
#include <vector>

namespace fdpe {

enum class ExperimentKind { grid_partition, random_marl };

const char* to_string(ExperimentKind kind);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::grid_partition;
  std::string scale = "desk";
  std::uint64_t seed = 1;
  std::string output;

  // MDP.
  double gamma = 0.93;
  Index width = 6, height = 6;
  double reward_low = 0.0, reward_high = 1.0;
  Index states = 20, actions = 4;
  double p_zero_trans = 0.98, p_zero_reward = 0.99, reward_sd = 10.0;

  // Features.
  Index rbf_x = 3, rbf_y = 3;
  bool rbf_negative_exponent = true;
  Index num_features = 5;

  // Network.
  Index agents = 4;
  Index regions_x = 2, regions_y = 2;
  double radius = 0.6;

  // Data.
  Index samples = 2057;
  Index burn_in = 100;

  // Solver.
  double lambda = 0.6;
  Index horizon = 10;
  double eta = 0.0;
  UMode u_mode = UMode::identity;
  Index J = 64;
  /// Zero selects the automatic choice from the step-size gate.
  double mu_theta = 0, mu_omega = 0;
  double step_scale = 0.4;
  double ratio_factor = 4.0;
  long max_epochs = 3000;
  double tol = 1e-12;
  /// Entry variance of the uniform noise added to the prior (random-marl).
  double prior_noise_variance = 0.0;

  // Decaying baseline.
  double baseline_step_factor = 1.0;
  double decay = 0.01;

  // Curves and sweeps.
  std::vector<double> lambdas{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  int trials = 20;
  std::vector<Index> sweep_J{1, 4, 16, 64};
  double target_error = 1e-10;

  TraceParams<double> trace() const { return {gamma, lambda, horizon}; }
};

/// Built-in presets: kind "grid-partition" or "random-marl", scale "desk" or "full".
io::json default_config(const std::string& kind, const std::string& scale);

/// Applies "a.b.c=value"; the value is parsed as JSON, falling back to a string.
void apply_override(io::json& config, const std::string& assignment);

/// Validates every key and range; unknown keys are rejected.
ExperimentConfig parse_config(const io::json& config);
io::json to_json(const ExperimentConfig& config);

/// Reads `path` (when non-empty) over the preset named by its "experiment"
/// and "scale" keys, then applies overrides in order.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                             const std::string& default_kind = "grid-partition");

}  // namespace fdpe

#endif  // FDPE_CONFIG_HPP
