#include "fdpe/config.hpp"
#include "fdpe/experiments.hpp"
#include "fdpe/io.hpp"
#include "fdpe/verify.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>

namespace {

using fdpe::io::json;
namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string kind = "grid-partition";
};

void add_common(CLI::App* cmd, Common& c, bool with_kind) {
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--set", c.sets, "Override a config key, e.g. --set solver.J=32")->take_all();
  cmd->add_option("--seed", c.seed, "Root seed");
  cmd->add_option("--out", c.out, "Output directory");
  if (with_kind)
    cmd->add_option("--experiment", c.kind, "Preset: grid-partition or random-marl")
        ->check(CLI::IsMember({"grid-partition", "random-marl"}));
}

fdpe::ExperimentConfig load(const Common& c, const std::string& forced_kind = "") {
  auto overrides = c.sets;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  if (!forced_kind.empty()) overrides.insert(overrides.begin(), "experiment=" + forced_kind);
  return fdpe::load_config(c.config, overrides, forced_kind.empty() ? c.kind : forced_kind);
}

fs::path out_dir(const Common& c, const fdpe::ExperimentConfig& cfg, const std::string& name) {
  if (!c.out.empty()) return c.out;
  if (!cfg.output.empty()) return cfg.output;
  return fdpe::output_root() / name;
}

int cmd_gen(const Common& c) {
  const auto cfg = load(c);
  const auto dir = out_dir(c, cfg, "gen");
  const auto p = fdpe::build_problem(cfg);
  fdpe::io::write_json(dir / "mdp.json", fdpe::io::to_json(p.mdp));
  fdpe::io::write_json(dir / "target_policy.json", fdpe::io::to_json(p.target));
  for (std::size_t k = 0; k < p.behaviors.size(); ++k)
    fdpe::io::write_json(dir / ("behavior_agent_" + std::to_string(k) + ".json"), fdpe::io::to_json(p.behaviors[k]));
  fdpe::io::write_json(dir / "features.json", fdpe::io::to_json(p.features));
  fdpe::io::write_json(dir / "topology.json", fdpe::io::to_json(p.topology));
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_collect(const Common& c) {
  const auto cfg = load(c);
  const auto dir = out_dir(c, cfg, "collect");
  const auto p = fdpe::build_problem(cfg);
  const auto data = fdpe::generate_data(p);
  const auto banks = fdpe::make_banks(p, data, cfg.trace());
  const auto sets = fdpe::weighted_sets(p, banks);
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto tag = std::to_string(k);
    fdpe::io::write_dataset_csv(dir / ("data_agent_" + tag + ".csv"), data[k], cfg.horizon);
    fdpe::io::write_json(dir / ("behavior_agent_" + tag + ".json"), fdpe::io::to_json(*data[k].behavior));
    fdpe::io::write_json(dir / ("estimates_agent_" + tag + ".json"), fdpe::io::to_json(sets[k]));
  }
  fdpe::io::write_json(dir / "target_policy.json", fdpe::io::to_json(p.target));
  fdpe::io::write_json(dir / "estimates_aggregate.json", fdpe::io::to_json(fdpe::aggregate(sets).set));
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_oracle(const Common& c) {
  const auto cfg = load(c);
  const auto dir = out_dir(c, cfg, "oracle");
  const auto p = fdpe::build_problem(cfg);
  const auto ex = fdpe::exact_AbC(p.chain, p.features, p.D, cfg.gamma, cfg.lambda, cfg.horizon);
  json j;
  j["gamma"] = cfg.gamma;
  j["lambda"] = cfg.lambda;
  j["horizon"] = cfg.horizon;
  j["rho1"] = ex.rho1;
  j["D"] = fdpe::io::to_json(p.D);
  j["value"] = fdpe::io::to_json(ex.value);
  j["theta_star"] = fdpe::io::to_json(ex.theta_star);
  j["theta_o"] = fdpe::io::to_json(fdpe::theta_o(ex, cfg.eta, p.U_exact(ex), p.theta_p));
  j["theta_p"] = fdpe::io::to_json(p.theta_p);
  j["A"] = fdpe::io::to_json(ex.A);
  j["b"] = fdpe::io::to_json(ex.b);
  j["C"] = fdpe::io::to_json(ex.C);
  json bias = json::array();
  for (double l : cfg.lambdas) {
    const auto e = fdpe::exact_AbC(p.chain, p.features, p.D, cfg.gamma, l, cfg.horizon);
    bias.push_back({{"lambda", l}, {"exact_bias", (fdpe::theta_o(e, cfg.eta, p.U_exact(e), p.theta_p) - e.theta_star).squaredNorm()}});
  }
  j["bias"] = std::move(bias);
  fdpe::io::write_json(dir / "oracle.json", j);
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_solve(const Common& c, const std::string& algorithm) {
  const auto cfg = load(c);
  const auto dir = out_dir(c, cfg, "solve");
  const auto p = fdpe::build_problem(cfg);
  const auto data = fdpe::generate_data(p);
  const auto banks = fdpe::make_banks(p, data, cfg.trace());
  auto s = fdpe::solver_config(p, banks);
  fdpe::RunOptions<double> opts;
  opts.theta_star = p.theta_star;
  fdpe::Trace<double> trace;
  if (algorithm == "fdpe") {
    trace = fdpe::fdpe_run(banks, p.topology, s, opts);
  } else if (algorithm == "algorithm1") {
    trace = fdpe::algorithm1_run(fdpe::weighted_sets(p, banks), p.topology, s, opts);
  } else {
    trace = fdpe::decaying_baseline_run(banks, p.topology, fdpe::baseline_config(p, s), opts);
  }
  fdpe::io::write_trace_csv(dir / "trace.csv", trace);
  json summary;
  summary["config"] = fdpe::to_json(cfg);
  summary["step_sizes"] = {{"mu_theta", s.mu_theta}, {"mu_omega", s.mu_omega}};
  summary["run"] = fdpe::trace_summary(trace, 1e-13);
  summary["saddle_point"] = {{"theta", fdpe::io::to_json(trace.target.theta)},
                             {"omega", fdpe::io::to_json(trace.target.omega)},
                             {"residual", trace.target.residual}};
  fdpe::io::write_json(dir / "summary.json", summary);
  std::cout << summary["run"].dump() << "\n";
  return 0;
}

int cmd_experiment(const Common& c, const std::string& kind, const std::string& name) {
  const auto cfg = load(c, kind);
  const auto dir = out_dir(c, cfg, name);
  const auto summary = fdpe::run_experiment(cfg, dir);
  std::cout << json{{"output", dir.string()},
                    {"fdpe_final_error", summary["fdpe"]["final_mean_error"]},
                    {"baseline_final_error", summary["baseline"]["final_mean_error"]},
                    {"rate", summary["fdpe"]["rate"]}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_sweep(const Common& c, const std::string& key, std::vector<std::string> values) {
  const auto base = load(c);
  const auto dir = out_dir(c, base, "sweep");
  if (values.empty()) {
    fdpe::require(key == "solver.J", fdpe::ErrorCode::config, "sweep: --values is required for " + key);
    for (auto J : base.sweep_J) values.push_back(std::to_string(J));
  }
  std::string text = "value,epochs,grad_evals,comm_rounds,final_error,converged\n";
  for (const auto& v : values) {
    auto sets = c.sets;
    sets.push_back(key + "=" + v);
    if (c.seed) sets.push_back("seed=" + std::to_string(*c.seed));
    const auto cfg = fdpe::load_config(c.config, sets, c.kind);
    const auto p = fdpe::build_problem(cfg);
    const auto banks = fdpe::make_banks(p, fdpe::generate_data(p), cfg.trace());
    auto s = fdpe::solver_config(p, banks);
    s.tol = cfg.target_error;
    long grads = 0;
    std::string row;
    try {
      const auto tr = fdpe::fdpe_run(banks, p.topology, s);
      for (const auto& st : tr.final_states) grads += st.grad_evals;
      row = v + "," + std::to_string(tr.epochs) + "," + std::to_string(grads) + "," + std::to_string(tr.comm_rounds) +
            "," + fdpe::io::format_double(tr.final_mean_error()) + "," + (tr.converged ? "1" : "0");
    } catch (const fdpe::Error& e) {
      if (e.code() != fdpe::ErrorCode::divergence) throw;
      row = v + ",0,0,0,inf,0";
    }
    text += row + "\n";
    std::cout << row << "\n";
  }
  fdpe::io::write_text(dir / "sweep.csv", text);
  return 0;
}

int cmd_verify(const Common& c, fdpe::Index agents, const std::string& inject) {
  fdpe::VerifyOptions o;
  o.seed = c.seed.value_or(1);
  o.agents = agents;
  o.inject = inject;
  const auto results = fdpe::verify(o);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "\n";
    ok = ok && r.pass;
  }
  if (!c.out.empty()) fdpe::io::write_json(fs::path(c.out) / "verify.json", fdpe::to_json(results));
  return ok ? 0 : 1;
}

void report(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized multi-agent policy evaluation simulator"};
  app.require_subcommand(1);

  Common gen, col, ora, sol, e1, e2, sw, ver;
  add_common(app.add_subcommand("gen", "Generate MDP, policies, features and topology"), gen, true);
  add_common(app.add_subcommand("collect", "Collect per-agent data sets and estimates"), col, true);
  add_common(app.add_subcommand("oracle", "Exact operators, A/b/C and bias per lambda"), ora, true);
  auto* solve = app.add_subcommand("solve", "One solver run with trace output");
  add_common(solve, sol, true);
  std::string algorithm = "fdpe";
  solve->add_option("--algorithm", algorithm, "fdpe, algorithm1 or baseline")
      ->check(CLI::IsMember({"fdpe", "algorithm1", "baseline"}));
  add_common(app.add_subcommand("exp1", "Grid-partition experiment bundle"), e1, false);
  add_common(app.add_subcommand("exp2", "Random MDP multi-agent experiment bundle"), e2, false);
  auto* sweep = app.add_subcommand("sweep", "Run FDPE to the target error over values of one key");
  add_common(sweep, sw, true);
  std::string key = "solver.J";
  std::vector<std::string> values;
  sweep->add_option("--key", key, "Config key to vary");
  sweep->add_option("--values", values, "Values (default: sweep.J)")->delimiter(',');
  auto* verify = app.add_subcommand("verify", "Run the property suite");
  add_common(verify, ver, false);
  fdpe::Index agents = 4;
  std::string inject;
  verify->add_option("--agents", agents, "Number of agents")->check(CLI::PositiveNumber);
  verify->add_option("--inject", inject, "Fault to inject")->check(CLI::IsMember({"", "corrupt-L"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report("usage", e.what());
    return 64;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "gen") return cmd_gen(gen);
    if (name == "collect") return cmd_collect(col);
    if (name == "oracle") return cmd_oracle(ora);
    if (name == "solve") return cmd_solve(sol, algorithm);
    if (name == "exp1") return cmd_experiment(e1, "grid-partition", "exp1");
    if (name == "exp2") return cmd_experiment(e2, "random-marl", "exp2");
    if (name == "sweep") return cmd_sweep(sw, key, values);
    if (name == "verify") return cmd_verify(ver, agents, inject);
  } catch (const fdpe::Error& e) {
    report(fdpe::to_string(e.code()), e.what());
    return 2;
  } catch (const std::exception& e) {
    report("internal", e.what());
    return 3;
  }
  return 0;
}
