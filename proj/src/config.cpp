#include "fdpe/config.hpp"

#include <set>
#include <sstream>

namespace fdpe {

using io::json;

const char* to_string(ExperimentKind kind) {
  return kind == ExperimentKind::grid_partition ? "grid-partition" : "random-marl";
}

json default_config(const std::string& kind, const std::string& scale) {
  require(kind == "grid-partition" || kind == "random-marl", ErrorCode::config,
          "unknown experiment kind '" + kind + "'");
  require(scale == "desk" || scale == "full", ErrorCode::config, "unknown scale '" + scale + "'");
  const bool full = scale == "full";
  json j;
  j["experiment"] = kind;
  j["scale"] = scale;
  j["seed"] = 1;
  j["output"] = "";
  j["mdp"] = {{"gamma", 0.93},       {"width", 6},        {"height", 6},
              {"reward_low", 0.0},   {"reward_high", 1.0}, {"states", 20},
              {"actions", 4},        {"p_zero_trans", 0.98}, {"p_zero_reward", 0.99},
              {"reward_sd", 10.0}};
  j["features"] = {{"rbf_x", 3}, {"rbf_y", 3}, {"rbf_negative_exponent", true}, {"count", 5}};
  j["network"] = {{"agents", 4}, {"regions_x", 2}, {"regions_y", 2}, {"radius", 0.6}};
  j["data"] = {{"samples", 2057}, {"burn_in", 100}};
  j["solver"] = {{"lambda", 0.6},      {"horizon", 10},      {"eta", 0.0},
                 {"u_mode", "identity"}, {"J", 64},            {"mu_theta", 0.0},
                 {"mu_omega", 0.0},    {"step_scale", 0.4},  {"ratio_factor", 4.0},
                 {"max_epochs", 3000}, {"tol", 1e-12},       {"prior_noise_variance", 0.0}};
  j["baseline"] = {{"step_factor", 1.0}, {"decay", 0.01}};
  j["curves"] = {{"lambdas", {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}}, {"trials", 20}};
  j["sweep"] = {{"J", {8, 32, 64, 128}}, {"target_error", 1e-10}};

  if (kind == "grid-partition" && full) {
    j["mdp"]["width"] = 15;
    j["mdp"]["height"] = 15;
    j["features"]["rbf_x"] = 5;
    j["features"]["rbf_y"] = 5;
    j["network"]["agents"] = 9;
    j["network"]["regions_x"] = 3;
    j["network"]["regions_y"] = 3;
    j["solver"]["horizon"] = 20;
    j["data"]["samples"] = (1 << 15) + 19;
    j["solver"]["J"] = 1024;
    j["sweep"]["J"] = {64, 256, 1024, 4096};
  }
  if (kind == "random-marl") {
    j["network"]["agents"] = 5;
    j["solver"]["lambda"] = 0.8;
    j["solver"]["horizon"] = 20;
    j["solver"]["eta"] = 1e-3;
    j["solver"]["prior_noise_variance"] = 2.5e-5;
    j["data"]["samples"] = 4096;
    j["sweep"]["J"] = {8, 32, 64, 128};
    if (full) {
      j["mdp"]["states"] = 50;
      j["mdp"]["actions"] = 10;
      j["network"]["agents"] = 15;
      j["network"]["radius"] = 0.27;
      j["data"]["samples"] = (1 << 18) + 19;
      j["solver"]["J"] = 4096;
      j["sweep"]["J"] = {256, 1024, 4096, 16384};
    }
  }
  return j;
}

namespace {

json override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

std::string preset_name(const std::string& text) {
  const json v = override_value(text);
  return v.is_string() ? v.get<std::string>() : text;
}

}  // namespace

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, ErrorCode::config,
          "override '" + assignment + "' must look like key=value");
  const std::string key = assignment.substr(0, eq);
  json value = override_value(assignment.substr(eq + 1));
  json* node = &config;
  std::istringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    require(node->is_object() && node->contains(path[i]), ErrorCode::config, "unknown config key '" + key + "'");
    node = &(*node)[path[i]];
  }
  require(node->is_object() && node->contains(path.back()), ErrorCode::config,
          "unknown config key '" + key + "'");
  (*node)[path.back()] = std::move(value);
}

namespace {

class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  const json& section(const std::string& name) {
    require(root_.contains(name) && root_[name].is_object(), ErrorCode::config,
            "config section '" + name + "' missing or not an object");
    return root_[name];
  }

  template <typename T>
  T get(const json& node, const std::string& where, const std::string& key) {
    require(node.contains(key), ErrorCode::config, "config key '" + where + key + "' missing");
    try {
      return node.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::config, "config key '" + where + key + "' has the wrong type");
    }
  }

  static void only(const json& node, const std::string& where, std::initializer_list<const char*> keys) {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& item : node.items())
      require(allowed.count(item.key()) > 0, ErrorCode::config, "unknown config key '" + where + item.key() + "'");
  }

 private:
  const json& root_;
};

void check(bool ok, const std::string& message) { require(ok, ErrorCode::config, message); }

}  // namespace

ExperimentConfig parse_config(const json& j) {
  require(j.is_object(), ErrorCode::config, "config must be a JSON object");
  Reader r(j);
  Reader::only(j, "", {"experiment", "scale", "seed", "output", "mdp", "features", "network", "data", "solver",
                       "baseline", "curves", "sweep"});
  ExperimentConfig c;
  const auto kind = r.get<std::string>(j, "", "experiment");
  check(kind == "grid-partition" || kind == "random-marl", "experiment must be grid-partition or random-marl");
  c.kind = kind == "grid-partition" ? ExperimentKind::grid_partition : ExperimentKind::random_marl;
  c.scale = r.get<std::string>(j, "", "scale");
  c.seed = r.get<std::uint64_t>(j, "", "seed");
  c.output = r.get<std::string>(j, "", "output");

  const auto& m = r.section("mdp");
  Reader::only(m, "mdp.", {"gamma", "width", "height", "reward_low", "reward_high", "states", "actions",
                           "p_zero_trans", "p_zero_reward", "reward_sd"});
  c.gamma = r.get<double>(m, "mdp.", "gamma");
  c.width = r.get<Index>(m, "mdp.", "width");
  c.height = r.get<Index>(m, "mdp.", "height");
  c.reward_low = r.get<double>(m, "mdp.", "reward_low");
  c.reward_high = r.get<double>(m, "mdp.", "reward_high");
  c.states = r.get<Index>(m, "mdp.", "states");
  c.actions = r.get<Index>(m, "mdp.", "actions");
  c.p_zero_trans = r.get<double>(m, "mdp.", "p_zero_trans");
  c.p_zero_reward = r.get<double>(m, "mdp.", "p_zero_reward");
  c.reward_sd = r.get<double>(m, "mdp.", "reward_sd");
  check(c.gamma > 0 && c.gamma < 1, "mdp.gamma must lie in (0,1)");
  check(c.width >= 2 && c.height >= 2, "mdp.width and mdp.height must be at least 2");
  check(c.reward_low <= c.reward_high, "mdp.reward_low must not exceed mdp.reward_high");
  check(c.states >= 1 && c.actions >= 1, "mdp.states and mdp.actions must be positive");
  check(c.p_zero_trans >= 0 && c.p_zero_trans < 1 && c.p_zero_reward >= 0 && c.p_zero_reward < 1,
        "mdp sparsity probabilities must lie in [0,1)");
  check(c.reward_sd >= 0, "mdp.reward_sd must be non-negative");

  const auto& f = r.section("features");
  Reader::only(f, "features.", {"rbf_x", "rbf_y", "rbf_negative_exponent", "count"});
  c.rbf_x = r.get<Index>(f, "features.", "rbf_x");
  c.rbf_y = r.get<Index>(f, "features.", "rbf_y");
  c.rbf_negative_exponent = r.get<bool>(f, "features.", "rbf_negative_exponent");
  c.num_features = r.get<Index>(f, "features.", "count");
  check(c.rbf_x >= 1 && c.rbf_y >= 1, "features.rbf_x and features.rbf_y must be positive");
  check(c.num_features >= 1, "features.count must be positive");

  const auto& n = r.section("network");
  Reader::only(n, "network.", {"agents", "regions_x", "regions_y", "radius"});
  c.agents = r.get<Index>(n, "network.", "agents");
  c.regions_x = r.get<Index>(n, "network.", "regions_x");
  c.regions_y = r.get<Index>(n, "network.", "regions_y");
  c.radius = r.get<double>(n, "network.", "radius");
  check(c.agents >= 1, "network.agents must be positive");
  check(c.radius > 0, "network.radius must be positive");
  if (c.kind == ExperimentKind::grid_partition) {
    check(c.regions_x >= 1 && c.regions_y >= 1, "network.regions_x/y must be positive");
    check(c.agents == c.regions_x * c.regions_y, "network.agents must equal regions_x * regions_y");
    check(c.width % c.regions_x == 0 && c.height % c.regions_y == 0,
          "grid dimensions must be divisible by the region counts");
  }

  const auto& d = r.section("data");
  Reader::only(d, "data.", {"samples", "burn_in"});
  c.samples = r.get<Index>(d, "data.", "samples");
  c.burn_in = r.get<Index>(d, "data.", "burn_in");
  check(c.burn_in >= 0, "data.burn_in must be non-negative");

  const auto& s = r.section("solver");
  Reader::only(s, "solver.", {"lambda", "horizon", "eta", "u_mode", "J", "mu_theta", "mu_omega", "step_scale",
                              "ratio_factor", "max_epochs", "tol", "prior_noise_variance"});
  c.lambda = r.get<double>(s, "solver.", "lambda");
  c.horizon = r.get<Index>(s, "solver.", "horizon");
  c.eta = r.get<double>(s, "solver.", "eta");
  const auto u = r.get<std::string>(s, "solver.", "u_mode");
  check(u == "identity" || u == "c_hat", "solver.u_mode must be identity or c_hat");
  c.u_mode = u == "identity" ? UMode::identity : UMode::c_hat;
  c.J = r.get<Index>(s, "solver.", "J");
  c.mu_theta = r.get<double>(s, "solver.", "mu_theta");
  c.mu_omega = r.get<double>(s, "solver.", "mu_omega");
  c.step_scale = r.get<double>(s, "solver.", "step_scale");
  c.ratio_factor = r.get<double>(s, "solver.", "ratio_factor");
  c.max_epochs = r.get<long>(s, "solver.", "max_epochs");
  c.tol = r.get<double>(s, "solver.", "tol");
  c.prior_noise_variance = r.get<double>(s, "solver.", "prior_noise_variance");
  check(c.lambda >= 0 && c.lambda <= 1, "solver.lambda must lie in [0,1]");
  check(c.horizon >= 1, "solver.horizon must be at least 1");
  check(c.samples > c.horizon, "data.samples must exceed solver.horizon");
  check(c.eta >= 0, "solver.eta must be non-negative");
  check(c.J >= 1 && c.J <= c.samples - c.horizon, "solver.J must lie in [1, samples - horizon]");
  check(c.mu_theta >= 0 && c.mu_omega >= 0, "solver step sizes must be non-negative (0 = automatic)");
  check((c.mu_theta == 0) == (c.mu_omega == 0), "solver.mu_theta and solver.mu_omega must both be set or both 0");
  check(c.step_scale > 0 && c.ratio_factor > 1, "solver.step_scale must be positive and ratio_factor > 1");
  check(c.max_epochs >= 0, "solver.max_epochs must be non-negative");
  check(c.tol >= 0, "solver.tol must be non-negative");
  check(c.prior_noise_variance >= 0, "solver.prior_noise_variance must be non-negative");

  const auto& b = r.section("baseline");
  Reader::only(b, "baseline.", {"step_factor", "decay"});
  c.baseline_step_factor = r.get<double>(b, "baseline.", "step_factor");
  c.decay = r.get<double>(b, "baseline.", "decay");
  check(c.baseline_step_factor > 0 && c.decay >= 0, "baseline.step_factor > 0 and baseline.decay >= 0 required");

  const auto& cv = r.section("curves");
  Reader::only(cv, "curves.", {"lambdas", "trials"});
  c.lambdas = r.get<std::vector<double>>(cv, "curves.", "lambdas");
  c.trials = r.get<int>(cv, "curves.", "trials");
  check(!c.lambdas.empty(), "curves.lambdas must be non-empty");
  for (double l : c.lambdas) check(l >= 0 && l <= 1, "curves.lambdas entries must lie in [0,1]");
  check(c.trials >= 1, "curves.trials must be positive");

  const auto& sw = r.section("sweep");
  Reader::only(sw, "sweep.", {"J", "target_error"});
  c.sweep_J = r.get<std::vector<Index>>(sw, "sweep.", "J");
  c.target_error = r.get<double>(sw, "sweep.", "target_error");
  for (Index jj : c.sweep_J) check(jj >= 1 && jj <= c.samples - c.horizon, "sweep.J entries out of range");
  check(c.target_error > 0, "sweep.target_error must be positive");
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j = default_config(to_string(c.kind), c.scale == "full" ? "full" : "desk");
  j["scale"] = c.scale;
  j["seed"] = c.seed;
  j["output"] = c.output;
  j["mdp"] = {{"gamma", c.gamma},
              {"width", c.width},
              {"height", c.height},
              {"reward_low", c.reward_low},
              {"reward_high", c.reward_high},
              {"states", c.states},
              {"actions", c.actions},
              {"p_zero_trans", c.p_zero_trans},
              {"p_zero_reward", c.p_zero_reward},
              {"reward_sd", c.reward_sd}};
  j["features"] = {{"rbf_x", c.rbf_x}, {"rbf_y", c.rbf_y}, {"rbf_negative_exponent", c.rbf_negative_exponent},
                   {"count", c.num_features}};
  j["network"] = {{"agents", c.agents}, {"regions_x", c.regions_x}, {"regions_y", c.regions_y}, {"radius", c.radius}};
  j["data"] = {{"samples", c.samples}, {"burn_in", c.burn_in}};
  j["solver"] = {{"lambda", c.lambda},
                 {"horizon", c.horizon},
                 {"eta", c.eta},
                 {"u_mode", to_string(c.u_mode)},
                 {"J", c.J},
                 {"mu_theta", c.mu_theta},
                 {"mu_omega", c.mu_omega},
                 {"step_scale", c.step_scale},
                 {"ratio_factor", c.ratio_factor},
                 {"max_epochs", c.max_epochs},
                 {"tol", c.tol},
                 {"prior_noise_variance", c.prior_noise_variance}};
  j["baseline"] = {{"step_factor", c.baseline_step_factor}, {"decay", c.decay}};
  j["curves"] = {{"lambdas", c.lambdas}, {"trials", c.trials}};
  j["sweep"] = {{"J", c.sweep_J}, {"target_error", c.target_error}};
  return j;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                             const std::string& default_kind) {
  json user = path.empty() ? json::object() : io::read_json(path);
  require(user.is_object(), ErrorCode::config, "config file must hold a JSON object");
  std::string kind = user.value("experiment", default_kind);
  std::string scale = user.value("scale", std::string("desk"));
  // Overrides may switch the preset itself.
  for (const auto& o : overrides) {
    if (o.rfind("experiment=", 0) == 0) kind = preset_name(o.substr(11));
    if (o.rfind("scale=", 0) == 0) scale = preset_name(o.substr(6));
  }
  json base = default_config(kind, scale);
  if (!user.empty()) {
    for (const auto& item : user.items())
      require(base.contains(item.key()), ErrorCode::config, "unknown config key '" + item.key() + "'");
    base.merge_patch(user);
    base["experiment"] = kind;
    base["scale"] = scale;
  }
  for (const auto& o : overrides) apply_override(base, o);
  return parse_config(base);
}

}  // namespace fdpe
