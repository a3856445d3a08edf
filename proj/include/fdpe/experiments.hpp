#ifndef FDPE_EXPERIMENTS_HPP
#define FDPE_EXPERIMENTS_HPP

#include "fdpe/config.hpp"
#include "fdpe/estimators.hpp"
#include "fdpe/features.hpp"
#include "fdpe/io.hpp"
#include "fdpe/mdp.hpp"
#include "fdpe/network.hpp"
#include "fdpe/oracle.hpp"
#include "fdpe/sampler.hpp"
#include "fdpe/solver.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fdpe {

/// Everything an experiment needs except the sampled data.
struct Problem {
  ExperimentConfig config;
  Mdp<double> mdp;  // rewards are the team average for random-marl
  Policy<double> target;
  std::vector<Policy<double>> behaviors;
  std::vector<std::vector<Index>> regions;
  /// Per-agent reward tensors (random-marl only).
  std::vector<std::vector<Matrix<double>>> agent_rewards;
  FeatureMap<double> features;
  Topology<double> topology;
  std::vector<double> taus;
  MarkovChain<double> chain;
  /// tau-weighted sampling distribution over states.
  Vector<double> D;
  Vector<double> value;
  Vector<double> theta_star;
  Vector<double> theta_p;

  Index agents() const { return static_cast<Index>(taus.size()); }
  Matrix<double> U_exact(const ExactProblem<double>& p) const;
};

Problem build_problem(const ExperimentConfig& config);

/// Per-agent data sets drawn from sub-stream `stream` (e.g. "data").
std::vector<Dataset<double>> generate_data(const Problem& problem, const std::string& stream = "data");

std::vector<SampleBank<double>> make_banks(const Problem& problem, const std::vector<Dataset<double>>& data,
                                           const TraceParams<double>& params);

std::vector<EstimateSet<double>> weighted_sets(const Problem& problem,
                                               const std::vector<SampleBank<double>>& banks);

/// Solver settings for FDPE; automatic step sizes put mu_omega/mu_theta at
/// ratio_factor times the gate minimum and scale mu_theta by K/lambda_max(C).
SolverConfig<double> solver_config(const Problem& problem, const std::vector<SampleBank<double>>& banks);
SolverConfig<double> baseline_config(const Problem& problem, const SolverConfig<double>& fdpe);

Curve<double> bias_variance_curve(const Problem& problem);

struct FrontierPoint {
  Index J = 0;
  Index batch_size = 0;
  long epochs = 0;
  long grad_evals = 0;
  long comm_rounds = 0;
  double final_error = 0;
  bool reached = false;
};

std::vector<FrontierPoint> frontier(const Problem& problem, const std::vector<SampleBank<double>>& banks,
                                    const std::vector<Index>& J_values);
void write_frontier_csv(const std::filesystem::path& path, const std::vector<FrontierPoint>& points);

struct RunPair {
  Trace<double> fdpe;
  Trace<double> baseline;
};

/// FDPE to convergence, then the baseline for the same gradient budget.
RunPair run_pair(const Problem& problem, const std::vector<SampleBank<double>>& banks);

io::json trace_summary(const Trace<double>& trace, double floor);

/// Full artifact bundle for either experiment kind. Returns the summary.
io::json run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Output root: FDPE_OUTPUT_ROOT, else "out".
std::filesystem::path output_root();

}  // namespace fdpe

#endif  // FDPE_EXPERIMENTS_HPP
