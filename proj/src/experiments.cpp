#include "fdpe/experiments.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>

namespace fdpe {

namespace fs = std::filesystem;
using io::json;

Matrix<double> Problem::U_exact(const ExactProblem<double>& p) const {
  return config.u_mode == UMode::identity ? Matrix<double>::Identity(p.C.rows(), p.C.cols()) : p.C;
}

namespace {

/// Stationary distribution of `policy` on the closed set `region`, embedded
/// into the full state space.
Vector<double> region_distribution(const Mdp<double>& mdp, const Policy<double>& policy,
                                   const std::vector<Index>& region) {
  const auto full = induce_chain(mdp, policy);
  const Index n = static_cast<Index>(region.size());
  MarkovChain<double> sub;
  sub.transition.resize(n, n);
  sub.expected_reward = Vector<double>::Zero(n);
  for (Index i = 0; i < n; ++i) {
    double inside = 0;
    for (Index j = 0; j < n; ++j) {
      sub.transition(i, j) = full.transition(region[static_cast<std::size_t>(i)], region[static_cast<std::size_t>(j)]);
      inside += sub.transition(i, j);
    }
    require(std::abs(inside - 1) < 1e-12, ErrorCode::invalid_region,
            "behavior policy leaves its exploration region");
  }
  StationaryOptions opts;
  opts.allow_periodic = true;
  const Vector<double> d = stationary_distribution(sub, opts);
  Vector<double> out = Vector<double>::Zero(mdp.num_states);
  for (Index i = 0; i < n; ++i) out(region[static_cast<std::size_t>(i)]) = d(i);
  return out;
}

/// Agents are neighbours when their regions share an edge.
Adjacency region_adjacency(Index nx, Index ny) {
  const Index K = nx * ny;
  Adjacency adj = Adjacency::Zero(K, K);
  for (Index j = 0; j < ny; ++j)
    for (Index i = 0; i < nx; ++i) {
      const Index k = j * nx + i;
      if (i + 1 < nx) adj(k, k + 1) = adj(k + 1, k) = 1;
      if (j + 1 < ny) adj(k, k + nx) = adj(k + nx, k) = 1;
    }
  return adj;
}

}  // namespace

Problem build_problem(const ExperimentConfig& cfg) {
  Problem p;
  p.config = cfg;
  const std::uint64_t mdp_seed = derive_seed(cfg.seed, "mdp");
  if (cfg.kind == ExperimentKind::grid_partition) {
    GridOptions go;
    go.gamma = cfg.gamma;
    go.reward_low = cfg.reward_low;
    go.reward_high = cfg.reward_high;
    auto [mdp, target] = grid_mdp<double>(cfg.width, cfg.height, mdp_seed, go);
    p.mdp = std::move(mdp);
    p.target = std::move(target);
    const GridShape grid{cfg.width, cfg.height};
    p.regions = grid_regions(grid, cfg.regions_x, cfg.regions_y);
    for (const auto& r : p.regions) p.behaviors.push_back(restricted_policy(p.target, r, grid));
    p.features = rbf_grid_features<double>(cfg.width, cfg.height,
                                           lattice_centers(cfg.width, cfg.height, cfg.rbf_x, cfg.rbf_y),
                                           cfg.rbf_negative_exponent);
    p.topology = cfg.agents == 1 ? single_agent<double>()
                                 : metropolis<double>(region_adjacency(cfg.regions_x, cfg.regions_y));
  } else {
    RandomMdpOptions ro;
    ro.gamma = cfg.gamma;
    auto [mdp, target] = random_mdp<double>(cfg.states, cfg.actions, cfg.p_zero_trans, cfg.p_zero_reward,
                                            cfg.reward_sd, mdp_seed, ro);
    p.mdp = std::move(mdp);
    p.target = std::move(target);
    // Local reward tensors; the MDP carries their team average.
    Rng rr(derive_seed(cfg.seed, "rewards"));
    for (Index k = 0; k < cfg.agents; ++k)
      p.agent_rewards.push_back(sparse_rewards<double>(cfg.states, cfg.actions, cfg.p_zero_reward, cfg.reward_sd, rr));
    for (Index a = 0; a < cfg.actions; ++a) {
      auto& r = p.mdp.rewards[static_cast<std::size_t>(a)];
      r.setZero();
      for (const auto& rk : p.agent_rewards) r += rk[static_cast<std::size_t>(a)] / static_cast<double>(cfg.agents);
    }
    p.behaviors.assign(static_cast<std::size_t>(cfg.agents), p.target);
    p.features = random_features<double>(cfg.states, cfg.num_features, derive_seed(cfg.seed, "features"));
    p.topology = cfg.agents == 1 ? single_agent<double>()
                                 : random_geometric<double>(cfg.agents, cfg.radius, derive_seed(cfg.seed, "topology"));
  }
  p.taus.assign(static_cast<std::size_t>(cfg.agents), 1.0 / static_cast<double>(cfg.agents));
  p.chain = induce_chain(p.mdp, p.target);

  const Index S = p.mdp.num_states;
  p.D = Vector<double>::Zero(S);
  if (cfg.kind == ExperimentKind::grid_partition) {
    for (std::size_t k = 0; k < p.regions.size(); ++k)
      p.D += p.taus[k] * region_distribution(p.mdp, p.behaviors[k], p.regions[k]);
  } else {
    p.D = stationary_distribution(p.chain);
  }
  p.value = value_function(p.chain, cfg.gamma);
  p.theta_star = theta_star(p.value, p.features, p.D);

  const Index M = p.features.num_features();
  p.theta_p = Vector<double>::Zero(M);
  if (cfg.kind == ExperimentKind::random_marl) {
    // Prior: unregularised minimiser plus uniform noise of the configured variance.
    const auto ex = exact_AbC(p.chain, p.features, p.D, cfg.gamma, cfg.lambda, cfg.horizon);
    p.theta_p = ex.theta_o;
    if (cfg.prior_noise_variance > 0) {
      Rng nr(derive_seed(cfg.seed, "prior"));
      const double half = std::sqrt(3.0 * cfg.prior_noise_variance);
      for (Index i = 0; i < M; ++i) p.theta_p(i) += nr.uniform(-half, half);
    }
  }
  return p;
}

std::vector<Dataset<double>> generate_data(const Problem& p, const std::string& stream) {
  const auto& cfg = p.config;
  std::vector<Dataset<double>> out;
  if (cfg.kind == ExperimentKind::grid_partition) {
    for (std::size_t k = 0; k < p.regions.size(); ++k) {
      CollectOptions o;
      o.burn_in = cfg.burn_in;
      o.initial_states = p.regions[k];
      o.allow_unsupported = true;  // region edges drop actions the target takes
      out.push_back(collect(p.mdp, p.behaviors[k], p.target, cfg.samples,
                            derive_seed(cfg.seed, stream + ".agent_" + std::to_string(k)), o));
    }
    return out;
  }
  CollectOptions o;
  o.burn_in = cfg.burn_in;
  const auto global = collect(p.mdp, p.target, p.target, cfg.samples, derive_seed(cfg.seed, stream + ".team"), o);
  const Index K = p.agents();
  Matrix<double> R(K, global.size());
  for (Index k = 0; k < K; ++k)
    for (Index t = 0; t < global.size(); ++t) {
      const auto i = static_cast<std::size_t>(t);
      R(k, t) = p.agent_rewards[static_cast<std::size_t>(k)][static_cast<std::size_t>(global.actions[i])](
          global.states[i], global.next_state(t));
    }
  return marl_preprocess(global, R);
}

std::vector<SampleBank<double>> make_banks(const Problem& p, const std::vector<Dataset<double>>& data,
                                           const TraceParams<double>& params) {
  if (p.config.kind == ExperimentKind::grid_partition) return build_banks(data, p.features, params);
  // Shared states and actions: one factor bank, per-agent reward terms.
  const auto shared = build_bank(data.front(), p.features, params);
  std::vector<SampleBank<double>> banks;
  for (const auto& d : data) banks.push_back(rebank_rewards(shared, d, params));
  return banks;
}

std::vector<EstimateSet<double>> weighted_sets(const Problem& p, const std::vector<SampleBank<double>>& banks) {
  std::vector<EstimateSet<double>> sets;
  for (std::size_t k = 0; k < banks.size(); ++k) sets.push_back(banks[k].estimates(p.config.u_mode, p.taus[k]));
  return sets;
}

SolverConfig<double> solver_config(const Problem& p, const std::vector<SampleBank<double>>& banks) {
  const auto& cfg = p.config;
  SolverConfig<double> s;
  s.eta = cfg.eta;
  s.trace = cfg.trace();
  s.J = cfg.J;
  s.taus = p.taus;
  s.theta_p = p.theta_p;
  s.u_mode = cfg.u_mode;
  s.max_epochs = cfg.max_epochs;
  s.tol = cfg.tol;
  s.seed = derive_seed(cfg.seed, "solver");
  s.decay = cfg.decay;
  if (cfg.mu_theta > 0) {
    s.mu_theta = cfg.mu_theta;
    s.mu_omega = cfg.mu_omega;
    return s;
  }
  const auto agg = aggregate(weighted_sets(p, banks)).set;
  const auto gate = check_step_sizes(1.0, 1.0, cfg.eta, agg);
  const double ratio = cfg.ratio_factor * gate.ratio_min;
  s.mu_theta = cfg.step_scale * static_cast<double>(p.agents()) / (ratio * gate.lambda_max_C);
  s.mu_omega = ratio * s.mu_theta;
  return s;
}

SolverConfig<double> baseline_config(const Problem& p, const SolverConfig<double>& fdpe) {
  SolverConfig<double> s = fdpe;
  s.mu_theta *= p.config.baseline_step_factor;
  s.mu_omega *= p.config.baseline_step_factor;
  s.decay = p.config.decay;
  s.tol = 0;
  return s;
}

Curve<double> bias_variance_curve(const Problem& p) {
  const auto& cfg = p.config;
  Curve<double> curve;
  curve.gamma = cfg.gamma;
  curve.horizon = cfg.horizon;
  curve.lambdas = cfg.lambdas;

  std::vector<ExactProblem<double>> exact;
  std::vector<Vector<double>> theta_os;
  for (double l : cfg.lambdas) {
    exact.push_back(exact_AbC(p.chain, p.features, p.D, cfg.gamma, l, cfg.horizon));
    theta_os.push_back(theta_o(exact.back(), cfg.eta, p.U_exact(exact.back()), p.theta_p));
    curve.exact_bias.push_back((theta_os.back() - p.theta_star).squaredNorm());
  }

  // Variance: the same regenerated data sets serve every lambda.
  const std::size_t L = cfg.lambdas.size();
  curve.empirical_variance = empirical_variance<double>(L, cfg.trials, [&](int t) {
    const auto data = generate_data(p, "curves.trial_" + std::to_string(t));
    std::vector<double> errs;
    for (std::size_t i = 0; i < L; ++i) {
      TraceParams<double> params{cfg.gamma, cfg.lambdas[i], cfg.horizon};
      const auto agg = aggregate(weighted_sets(p, make_banks(p, data, params))).set;
      errs.push_back((saddle_point(agg, cfg.eta, p.theta_p).theta - theta_os[i]).squaredNorm());
    }
    return errs;
  });

  const double prior_distance = (p.theta_p - p.theta_star).norm();
  curve.bias_fit = fit_bias(cfg.gamma, cfg.horizon, cfg.lambdas, curve.exact_bias, cfg.eta, prior_distance);
  const Index usable = cfg.samples - cfg.horizon;
  curve.variance_fit = fit_variance(cfg.gamma, cfg.horizon, usable, cfg.lambdas, curve.empirical_variance, cfg.eta,
                                    curve.bias_fit.kappa1);
  for (double l : cfg.lambdas) {
    curve.approx_bias.push_back(approx_bias(curve.bias_fit, cfg.gamma, l, cfg.horizon, cfg.eta, prior_distance, false));
    curve.approx_variance.push_back(
        approx_variance(curve.variance_fit, curve.bias_fit.kappa1, cfg.gamma, l, cfg.horizon, usable, cfg.eta));
  }
  return curve;
}

std::vector<FrontierPoint> frontier(const Problem& p, const std::vector<SampleBank<double>>& banks,
                                    const std::vector<Index>& J_values) {
  std::vector<FrontierPoint> out;
  const auto base = solver_config(p, banks);
  for (Index J : J_values) {
    auto s = base;
    s.J = J;
    s.tol = p.config.target_error;
    FrontierPoint pt;
    pt.J = J;
    pt.batch_size = (banks.front().size() + J - 1) / J;
    try {
      const auto tr = fdpe_run(banks, p.topology, s);
      pt.epochs = tr.epochs;
      pt.comm_rounds = tr.comm_rounds;
      for (const auto& st : tr.final_states) pt.grad_evals += st.grad_evals;
      pt.final_error = tr.final_mean_error();
      pt.reached = tr.converged;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::divergence) throw;
      pt.final_error = std::numeric_limits<double>::infinity();
    }
    out.push_back(pt);
  }
  return out;
}

void write_frontier_csv(const fs::path& path, const std::vector<FrontierPoint>& points) {
  std::string text = std::string(io::kFrontierHeader) + "\n";
  for (const auto& q : points)
    text += std::to_string(q.J) + "," + std::to_string(q.batch_size) + "," + std::to_string(q.epochs) + "," +
            std::to_string(q.grad_evals) + "," + std::to_string(q.comm_rounds) + "," +
            io::format_double(q.final_error) + "," + (q.reached ? "1" : "0") + "\n";
  io::write_text(path, text);
}

RunPair run_pair(const Problem& p, const std::vector<SampleBank<double>>& banks) {
  RunPair out;
  const auto s = solver_config(p, banks);
  RunOptions<double> opts;
  opts.theta_star = p.theta_star;
  out.fdpe = fdpe_run(banks, p.topology, s, opts);
  // Same per-agent gradient budget: FDPE spends n in epoch 0 and 2n after.
  const long n = banks.front().size();
  const long budget = out.fdpe.records.empty() ? 0 : out.fdpe.records.back().grad_evals;
  auto b = baseline_config(p, s);
  b.max_epochs = (budget + n - 1) / n;
  out.baseline = decaying_baseline_run(banks, p.topology, b, opts);
  return out;
}

json trace_summary(const Trace<double>& t, double floor) {
  const auto errors = t.mean_error();
  const auto fit = fit_linear_rate(errors, floor);
  json j;
  j["algorithm"] = t.algorithm;
  j["epochs"] = t.epochs;
  j["converged"] = t.converged;
  j["comm_rounds"] = t.comm_rounds;
  j["final_mean_error"] = t.final_mean_error();
  j["final_consensus_gap"] = t.final_states.empty() ? 0.0 : consensus_gap(t.final_states);
  long grads = 0;
  for (const auto& s : t.final_states) grads += s.grad_evals;
  j["grad_evals"] = grads;
  j["rate"] = {{"per_epoch", fit.rate}, {"r2", fit.r2}, {"first_epoch", fit.first}, {"last_epoch", fit.last}};
  j["gate"] = io::to_json(t.gate);
  return j;
}

fs::path output_root() {
  const char* env = std::getenv("FDPE_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("out");
}

json run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  using clock = std::chrono::steady_clock;
  json timing;
  const auto t0 = clock::now();
  const auto lap = [&](const char* name, clock::time_point since) {
    timing[name] = std::chrono::duration<double>(clock::now() - since).count();
  };

  fs::create_directories(out_dir);
  io::write_json(out_dir / "config.json", to_json(cfg));
  auto t = clock::now();
  const Problem p = build_problem(cfg);
  io::write_json(out_dir / "mdp.json", io::to_json(p.mdp));
  io::write_json(out_dir / "target_policy.json", io::to_json(p.target));
  io::write_json(out_dir / "features.json", io::to_json(p.features));
  io::write_json(out_dir / "topology.json", io::to_json(p.topology));
  lap("build", t);

  t = clock::now();
  const auto data = generate_data(p);
  for (std::size_t k = 0; k < data.size(); ++k)
    io::write_dataset_csv(out_dir / ("data_agent_" + std::to_string(k) + ".csv"), data[k], cfg.horizon);
  const auto banks = make_banks(p, data, cfg.trace());
  const auto sets = weighted_sets(p, banks);
  const auto report = aggregate(sets);
  lap("data", t);

  t = clock::now();
  const auto curve = bias_variance_curve(p);
  io::write_curves_csv(out_dir / "curves.csv", curve);
  lap("curves", t);

  t = clock::now();
  const auto pair = run_pair(p, banks);
  io::write_trace_csv(out_dir / "trace_fdpe.csv", pair.fdpe);
  io::write_trace_csv(out_dir / "trace_baseline.csv", pair.baseline);
  lap("runs", t);

  t = clock::now();
  const auto points = frontier(p, banks, cfg.sweep_J);
  write_frontier_csv(out_dir / "frontier.csv", points);
  lap("frontier", t);

  json summary;
  summary["experiment"] = to_string(cfg.kind);
  summary["config"] = to_json(cfg);
  json agents = json::array();
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const double cmax = lambda_max_symmetric(sets[k].C);
    agents.push_back({{"agent", k},
                      {"samples", banks[k].size()},
                      {"support_violations", data[k].support_violations},
                      {"c_lambda_min", lambda_min_symmetric(sets[k].C)},
                      {"c_relative_lambda_min", cmax > 0 ? lambda_min_symmetric(sets[k].C) / cmax : 0.0},
                      {"assumption_ok", invertibility_holds(sets[k])}});
  }
  summary["agents"] = std::move(agents);
  summary["aggregate"] = {{"c_lambda_min", report.c_lambda_min},
                          {"a_sigma_min", report.a_sigma_min},
                          {"assumption_ok", report.assumption_ok}};
  summary["theta_star"] = io::to_json(p.theta_star);
  summary["theta_p"] = io::to_json(p.theta_p);
  summary["saddle_point"] = {{"theta", io::to_json(pair.fdpe.target.theta)},
                             {"omega", io::to_json(pair.fdpe.target.omega)},
                             {"residual", pair.fdpe.target.residual}};
  const auto s = solver_config(p, banks);
  summary["step_sizes"] = {{"mu_theta", s.mu_theta}, {"mu_omega", s.mu_omega}};
  summary["fdpe"] = trace_summary(pair.fdpe, 1e-13);
  summary["baseline"] = trace_summary(pair.baseline, 1e-13);
  summary["curve_fit"] = {{"kappa1", curve.bias_fit.kappa1},
                          {"kappa2", curve.bias_fit.kappa2},
                          {"kappa3", curve.bias_fit.kappa3},
                          {"kappa4", curve.variance_fit.kappa4},
                          {"bias_rms_residual", curve.bias_fit.rms_residual},
                          {"variance_rms_residual", curve.variance_fit.rms_residual}};
  json fr = json::array();
  for (const auto& q : points)
    fr.push_back({{"J", q.J}, {"grad_evals", q.grad_evals}, {"comm_rounds", q.comm_rounds}, {"reached", q.reached}});
  summary["frontier"] = std::move(fr);
  io::write_json(out_dir / "summary.json", summary);

  lap("total", t0);
  io::write_json(out_dir / "timing.json", timing);
  return summary;
}

}  // namespace fdpe
