#include "fdpe/verify.hpp"

#include "fdpe/estimators.hpp"
#include "fdpe/features.hpp"
#include "fdpe/mdp.hpp"
#include "fdpe/network.hpp"
#include "fdpe/oracle.hpp"
#include "fdpe/sampler.hpp"
#include "fdpe/solver.hpp"

#include <sstream>

namespace fdpe {

namespace {

std::string sci(double x) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << x;
  return s.str();
}

class Suite {
 public:
  template <typename Fn>
  void run(const std::string& name, Fn&& fn) {
    PropertyResult r;
    r.name = name;
    try {
      r.pass = fn(r.detail);
    } catch (const Error& e) {
      r.pass = false;
      r.detail = std::string(to_string(e.code())) + ": " + e.what();
    }
    results.push_back(std::move(r));
  }

  std::vector<PropertyResult> results;
};

}  // namespace

std::vector<PropertyResult> verify(const VerifyOptions& o) {
  require(o.agents >= 1, ErrorCode::invalid_argument, "verify: need at least one agent");
  Suite suite;
  const double gamma = 0.9, lambda = 0.6;
  const Index H = 4, S = 10, A = 3, M = 4;
  RandomMdpOptions ro;
  ro.gamma = gamma;
  auto [mdp, target] = random_mdp<double>(S, A, 0.3, 0.5, 1.0, derive_seed(o.seed, "mdp"), ro);
  // Offset keeps b away from zero so relative errors are meaningful.
  for (auto& r : mdp.rewards) r.array() += 1.0;
  Policy<double> behavior{0.5 * target.probs + 0.5 * Matrix<double>::Constant(S, A, 1.0 / A)};
  const auto X = random_features<double>(S, M, derive_seed(o.seed, "features"));
  const auto chain = induce_chain(mdp, target);
  const auto behavior_chain = induce_chain(mdp, behavior);
  const TraceParams<double> params{gamma, lambda, H};

  suite.run("mdp.induced-chain-stochastic", [&](std::string& d) {
    const double err = (chain.transition.rowwise().sum().array() - 1).abs().maxCoeff();
    d = "max row-sum error " + sci(err);
    return err < 1e-12;
  });

  suite.run("mdp.h-stage-bellman", [&](std::string& d) {
    const auto v = value_function(chain, gamma);
    Vector<double> acc = Vector<double>::Zero(S);
    Matrix<double> Pn = Matrix<double>::Identity(S, S);
    const Index h = 7;
    for (Index n = 0; n < h; ++n) {
      acc += std::pow(gamma, double(n)) * (Pn * chain.expected_reward);
      Pn = Pn * chain.transition;
    }
    acc += std::pow(gamma, double(h)) * (Pn * v);
    const double err = (acc - v).cwiseAbs().maxCoeff();
    d = "residual " + sci(err);
    return err < 1e-10;
  });

  suite.run("oracle.rho1-range", [&](std::string& d) {
    int bad = 0;
    for (double g = 0.05; g < 1; g += 0.1)
      for (double l = 0; l <= 1.0001; l += 0.125)
        for (Index h : {1, 2, 5, 20, 100}) {
          const double r = rho1(g, std::min(l, 1.0), h);
          if (!(r > 0 && r <= g + 1e-15)) ++bad;
        }
    d = std::to_string(bad) + " grid points outside (0, gamma]";
    return bad == 0;
  });

  suite.run("oracle.multistep-bellman", [&](std::string& d) {
    const auto ops = bellman_operators(chain, gamma, lambda, 6);
    const auto v = value_function(chain, gamma);
    const double rows = (ops.Gamma1.rowwise().sum().array() - 1).abs().maxCoeff();
    const double res = (v - ops.rho1_gamma1 * v - ops.Gamma2 * chain.expected_reward).cwiseAbs().maxCoeff();
    d = "Gamma1 row-sum error " + sci(rows) + ", residual " + sci(res);
    return rows < 1e-12 && res < 1e-10;
  });

  const Vector<double> Db = stationary_distribution(behavior_chain);
  suite.run("oracle.expanded-A", [&](std::string& d) {
    const auto ex = exact_AbC(chain, X, Db, gamma, lambda, H);
    const double err = (ex.A - expanded_A(chain, X.matrix, Db, gamma, lambda, H)).cwiseAbs().maxCoeff();
    d = "max difference " + sci(err);
    return err < 1e-10;
  });

  suite.run("sampler.ratio-recursion", [&](std::string& d) {
    const auto data = collect(mdp, behavior, target, 60, derive_seed(o.seed, "ratios"));
    const auto table = ratios(data, H);
    double worst = 0;
    for (Index t = 0; t < table.usable(); ++t)
      for (Index h = 0; h <= H; ++h) {
        double direct = 1;
        for (Index j = t; j < t + h; ++j) direct *= data.step_ratios[static_cast<std::size_t>(j)];
        worst = std::max(worst, std::abs(table(t, h) - direct) / std::max(1.0, std::abs(direct)));
      }
    d = "max relative difference " + sci(worst);
    return worst < 1e-12;
  });

  suite.run("estimators.unbiased", [&](std::string& d) {
    const auto ex = exact_AbC(chain, X, Db, gamma, lambda, H);
    const auto data = collect(mdp, behavior, target, o.samples, derive_seed(o.seed, "unbiased"));
    const auto est = batch_estimates(data, X, params, 1.0, UMode::identity);
    const double ea = (est.A - ex.A).norm() / ex.A.norm();
    const double eb = (est.b - ex.b).norm() / ex.b.norm();
    d = "relative error A " + sci(ea) + ", b " + sci(eb) + " at N=" + std::to_string(o.samples);
    return ea < 0.1 && eb < 0.1;
  });

  // Network.
  Topology<double> topo;
  if (o.agents == 1) topo = single_agent<double>();
  else if (o.agents == 2) topo = metropolis<double>(complete_adjacency(2));
  else topo = metropolis<double>(ring_adjacency(o.agents));
  suite.run("network.combination-matrix", [&](std::string& d) {
    Matrix<double> L = topo.L;
    if (o.inject == "corrupt-L") L(0, 0) += 0.05;
    const std::string failed = check_combination_matrix(L);
    d = failed.empty() ? "K=" + std::to_string(o.agents) + " ok" : "failed property: " + failed;
    return failed.empty();
  });
  suite.run("network.random-geometric", [&](std::string& d) {
    int bad = 0;
    for (std::uint64_t s = 0; s < 20; ++s)
      if (!check_combination_matrix(random_geometric<double>(8, 0.5, derive_seed(o.seed, "geo") + s).L).empty()) ++bad;
    d = std::to_string(bad) + " of 20 graphs failed";
    return bad == 0;
  });

  // Solver on per-agent off-policy data.
  std::vector<SampleBank<double>> banks;
  std::vector<EstimateSet<double>> sets;
  for (Index k = 0; k < o.agents; ++k) {
    const auto data = collect(mdp, behavior, target, 400, derive_seed(o.seed, "data.agent_" + std::to_string(k)));
    banks.push_back(build_bank(data, X, params));
    sets.push_back(banks.back().estimates(UMode::identity, 1.0 / double(o.agents)));
  }
  SolverConfig<double> cfg;
  cfg.trace = params;
  cfg.eta = 0.01;
  cfg.seed = derive_seed(o.seed, "solver");
  const auto agg = aggregate(sets).set;
  const auto gate0 = check_step_sizes(1.0, 1.0, cfg.eta, agg);
  const double ratio = 4 * gate0.ratio_min;
  cfg.mu_theta = 0.4 * double(o.agents) / (ratio * gate0.lambda_max_C);
  cfg.mu_omega = ratio * cfg.mu_theta;

  suite.run("solver.gate-report", [&](std::string& d) {
    const auto g = check_step_sizes(cfg, agg);
    const Matrix<double> CinvAt = agg.C.ldlt().solve(agg.A.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix<double>> es(Matrix<double>((agg.A * CinvAt + (agg.A * CinvAt).transpose()) / 2));
    const double q = es.eigenvalues().maxCoeff() / g.lambda_max_C;
    const double rhs = cfg.eta * g.lambda_max_U / g.lambda_max_C + 2 * std::sqrt(g.ratio * q);
    d = "ratio " + sci(g.ratio) + " vs rhs " + sci(g.rhs);
    return std::abs(rhs - g.rhs) < 1e-10 * std::max(1.0, rhs) && g.pass;
  });

  suite.run("solver.saddle-gradient", [&](std::string& d) {
    const auto sp = saddle_point(agg, cfg.eta, Vector<double>(Vector<double>::Zero(M)));
    d = "residual " + sci(sp.residual);
    return sp.residual < 1e-10;
  });

  suite.run("solver.fixed-point", [&](std::string& d) {
    auto c = cfg;
    c.max_epochs = 0;
    const auto z = algorithm1_run(sets, topo, c).target.stacked();
    RunOptions<double> opts;
    opts.initial = consistent_states(sets, cfg, z);
    c.max_epochs = 3;
    double worst = 0;
    for (const auto& s : algorithm1_run(sets, topo, c, opts).final_states) worst = std::max(worst, (s.z - z).norm());
    c.J = 5;
    for (const auto& s : fdpe_run(banks, topo, c, opts).final_states) worst = std::max(worst, (s.z - z).norm());
    d = "max drift " + sci(worst);
    return worst < 1e-10;
  });

  suite.run("solver.fdpe-J1-equals-algorithm1", [&](std::string& d) {
    auto c = cfg;
    c.max_epochs = 0;
    c.J = 1;
    std::vector<std::vector<Vector<double>>> a_iter, f_iter;
    RunOptions<double> oa, of;
    oa.observer = [&](long, Index, const std::vector<AgentState<double>>& st) {
      std::vector<Vector<double>> zs;
      for (const auto& s : st) zs.push_back(s.z);
      a_iter.push_back(std::move(zs));
    };
    of.observer = [&](long, Index, const std::vector<AgentState<double>>& st) {
      std::vector<Vector<double>> zs;
      for (const auto& s : st) zs.push_back(s.z);
      f_iter.push_back(std::move(zs));
    };
    c.max_epochs = 200;
    algorithm1_run(sets, topo, c, oa);
    fdpe_run(banks, topo, c, of);
    double worst = a_iter.size() == f_iter.size() ? 0.0 : 1.0;
    for (std::size_t i = 0; i < std::min(a_iter.size(), f_iter.size()); ++i)
      for (std::size_t k = 0; k < a_iter[i].size(); ++k)
        worst = std::max(worst, (a_iter[i][k] - f_iter[i][k]).cwiseAbs().maxCoeff());
    d = std::to_string(a_iter.size()) + " iterations, max difference " + sci(worst);
    return worst < 1e-12 && a_iter.size() >= 200;
  });

  suite.run("solver.fdpe-converges", [&](std::string& d) {
    auto c = cfg;
    c.J = 8;
    c.max_epochs = 5000;
    c.tol = 1e-16;
    const auto tr = fdpe_run(banks, topo, c);
    d = "final error " + sci(tr.final_mean_error()) + " after " + std::to_string(tr.epochs) + " epochs";
    return tr.converged;
  });

  suite.run("solver.avrg-accumulator", [&](std::string& d) {
    QuadraticFiniteSum<double> q;
    Rng rng(derive_seed(o.seed, "avrg"));
    for (int n = 0; n < 12; ++n) {
      Matrix<double> R(3, 3);
      for (Index i = 0; i < 9; ++i) R(i) = rng.normal();
      q.H.push_back(R * R.transpose() + Matrix<double>::Identity(3, 3));
      Vector<double> c(3);
      for (Index i = 0; i < 3; ++i) c(i) = rng.normal();
      q.c.push_back(c);
    }
    Vector<double> theta0(3);
    theta0 << 0.3, -0.2, 0.1;
    const auto r = avrg_run(q, 0.0, 3, 7, theta0);
    const Vector<double> full = q.full_gradient(theta0);
    double worst = 0;
    for (std::size_t e = 1; e < r.g.size(); ++e) worst = std::max(worst, (r.g[e] - full).cwiseAbs().maxCoeff());
    d = "max difference " + sci(worst);
    return worst < 1e-14;
  });

  return suite.results;
}

io::json to_json(const std::vector<PropertyResult>& results) {
  io::json j = io::json::array();
  for (const auto& r : results) j.push_back({{"property", r.name}, {"pass", r.pass}, {"detail", r.detail}});
  return j;
}

}  // namespace fdpe
