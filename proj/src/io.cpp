#include "fdpe/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace fdpe::io {

namespace fs = std::filesystem;

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json to_json(const Matrix<double>& m) {
  json data = json::array();
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

json to_json(const Vector<double>& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Matrix<double> matrix_from_json(const json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  require(rows >= 0 && cols >= 0 && data.size() == static_cast<std::size_t>(rows * cols),
          ErrorCode::io, "matrix: data length does not match rows x cols");
  Matrix<double> m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)].get<double>();
  return m;
}

Vector<double> vector_from_json(const json& j) {
  require(j.is_array(), ErrorCode::io, "vector: expected an array");
  Vector<double> v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

namespace {

void check_schema(const json& j, const char* kind) {
  require(j.value("kind", std::string()) == kind, ErrorCode::io,
          std::string("expected a serialized ") + kind);
  require(j.value("schema", 0) == kSchemaVersion, ErrorCode::io,
          std::string(kind) + ": unsupported schema version");
}

json header(const char* kind) { return json{{"kind", kind}, {"schema", kSchemaVersion}}; }

}  // namespace

json to_json(const Mdp<double>& mdp) {
  json j = header("mdp");
  j["num_states"] = mdp.num_states;
  j["num_actions"] = mdp.num_actions;
  j["gamma"] = mdp.gamma;
  j["provenance"] = {{"generator", mdp.generator}, {"seed", mdp.seed}, {"rng", kGenerator}};
  json p = json::array(), r = json::array();
  for (Index a = 0; a < mdp.num_actions; ++a) {
    p.push_back(to_json(mdp.transitions[static_cast<std::size_t>(a)]));
    r.push_back(to_json(mdp.rewards[static_cast<std::size_t>(a)]));
  }
  j["transitions"] = std::move(p);
  j["rewards"] = std::move(r);
  return j;
}

Mdp<double> mdp_from_json(const json& j) {
  check_schema(j, "mdp");
  Mdp<double> mdp;
  mdp.num_states = j.at("num_states").get<Index>();
  mdp.num_actions = j.at("num_actions").get<Index>();
  mdp.gamma = j.at("gamma").get<double>();
  const auto& prov = j.at("provenance");
  mdp.generator = prov.at("generator").get<std::string>();
  mdp.seed = prov.at("seed").get<std::uint64_t>();
  for (const auto& m : j.at("transitions")) mdp.transitions.push_back(matrix_from_json(m));
  for (const auto& m : j.at("rewards")) mdp.rewards.push_back(matrix_from_json(m));
  validate(mdp);
  return mdp;
}

json to_json(const Policy<double>& policy) {
  json j = header("policy");
  j["probs"] = to_json(policy.probs);
  j["hash"] = policy_hash(policy);
  return j;
}

Policy<double> policy_from_json(const json& j) {
  check_schema(j, "policy");
  Policy<double> p{matrix_from_json(j.at("probs"))};
  validate(p);
  return p;
}

json to_json(const FeatureMap<double>& features) {
  json j = header("features");
  j["matrix"] = to_json(features.matrix);
  return j;
}

FeatureMap<double> features_from_json(const json& j) {
  check_schema(j, "features");
  FeatureMap<double> f{matrix_from_json(j.at("matrix"))};
  validate(f);
  return f;
}

json to_json(const Topology<double>& t) {
  json j = header("topology");
  j["agents"] = t.K;
  j["adjacency"] = to_json(Matrix<double>(t.adjacency.cast<double>()));
  j["L"] = to_json(t.L);
  json pos = json::array();
  for (const auto& [x, y] : t.positions) pos.push_back({x, y});
  j["positions"] = std::move(pos);
  j["lambda2"] = t.lambda2;
  return j;
}

Topology<double> topology_from_json(const json& j) {
  check_schema(j, "topology");
  Topology<double> t;
  t.K = j.at("agents").get<Index>();
  t.adjacency = matrix_from_json(j.at("adjacency")).cast<int>();
  t.L = matrix_from_json(j.at("L"));
  for (const auto& p : j.at("positions")) t.positions.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  t.lambda2 = spectral_gap(t.L);
  validate(t);
  return t;
}

json to_json(const EstimateSet<double>& s) {
  json j = header("estimates");
  j["n_samples"] = s.n_samples;
  j["tau"] = s.tau;
  j["A"] = to_json(s.A);
  j["b"] = to_json(s.b);
  j["C"] = to_json(s.C);
  j["U"] = to_json(s.U);
  return j;
}

EstimateSet<double> estimates_from_json(const json& j) {
  check_schema(j, "estimates");
  EstimateSet<double> s;
  s.n_samples = j.at("n_samples").get<Index>();
  s.tau = j.at("tau").get<double>();
  s.A = matrix_from_json(j.at("A"));
  s.b = vector_from_json(j.at("b"));
  s.C = matrix_from_json(j.at("C"));
  s.U = matrix_from_json(j.at("U"));
  const Index M = s.b.size();
  require(s.A.rows() == M && s.A.cols() == M && s.C.rows() == M && s.C.cols() == M &&
              s.U.rows() == M && s.U.cols() == M,
          ErrorCode::io, "estimates: inconsistent dimensions");
  return s;
}

json to_json(const GateReport<double>& g) {
  return json{{"ratio", g.ratio},
              {"rhs", g.rhs},
              {"ratio_min", g.ratio_min},
              {"lambda_max_U", g.lambda_max_U},
              {"lambda_max_C", g.lambda_max_C},
              {"lambda_max_ACA", g.lambda_max_ACA},
              {"pass", g.pass}};
}

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot open " + path.string() + " for writing");
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  require(out.good(), ErrorCode::io, "write failed for " + path.string());
}

}  // namespace

void write_dataset_csv(const fs::path& path, const Dataset<double>& data, Index horizon) {
  auto out = open_out(path);
  out << "# schema: " << kSchemaVersion << "\n";
  out << "# N: " << data.size() << "\n";
  out << "# H: " << horizon << "\n";
  out << "# seed: " << data.seed << "\n";
  out << "# rng: " << kGenerator << "\n";
  out << "# behavior_hash: " << (data.behavior ? policy_hash(*data.behavior) : 0) << "\n";
  out << "# target_hash: " << (data.target ? policy_hash(*data.target) : 0) << "\n";
  out << "# final_state: " << data.final_state << "\n";
  out << "# support_violations: " << data.support_violations << "\n";
  out << "t,s,a,r\n";
  for (Index t = 0; t < data.size(); ++t) {
    const auto i = static_cast<std::size_t>(t);
    out << t << ',' << data.states[i] << ',' << data.actions[i] << ',' << format_double(data.rewards[i])
        << '\n';
  }
  finish(out, path);
}

Dataset<double> read_dataset_csv(const fs::path& path, std::shared_ptr<const Policy<double>> behavior,
                                 std::shared_ptr<const Policy<double>> target) {
  require(behavior && target, ErrorCode::invalid_argument, "read_dataset_csv: policies required");
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "cannot open " + path.string());
  Dataset<double> data;
  data.behavior = behavior;
  data.target = target;
  std::string line;
  Index declared = -1;
  bool header_seen = false;
  std::uint64_t behavior_hash = 0, target_hash = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      require(colon != std::string::npos, ErrorCode::io, "dataset: malformed header line");
      const std::string key = line.substr(2, colon - 2);
      const std::string value = line.substr(colon + 2);
      if (key == "N") declared = std::stol(value);
      else if (key == "seed") data.seed = std::stoull(value);
      else if (key == "final_state") data.final_state = std::stol(value);
      else if (key == "behavior_hash") behavior_hash = std::stoull(value);
      else if (key == "target_hash") target_hash = std::stoull(value);
      continue;
    }
    if (!header_seen) {
      require(line == "t,s,a,r", ErrorCode::io, "dataset: expected column header t,s,a,r");
      header_seen = true;
      continue;
    }
    std::istringstream row(line);
    std::string cell[4];
    for (auto& c : cell) require(static_cast<bool>(std::getline(row, c, ',')), ErrorCode::io, "dataset: short row");
    require(std::stol(cell[0]) == data.size(), ErrorCode::io, "dataset: rows out of order");
    const Index s = std::stol(cell[1]), a = std::stol(cell[2]);
    require(s >= 0 && s < behavior->num_states() && a >= 0 && a < behavior->num_actions(),
            ErrorCode::io, "dataset: state or action out of range");
    data.states.push_back(s);
    data.actions.push_back(a);
    data.rewards.push_back(std::stod(cell[3]));
  }
  require(header_seen && declared == data.size(), ErrorCode::io, "dataset: row count mismatch");
  require(behavior_hash == policy_hash(*behavior) && target_hash == policy_hash(*target), ErrorCode::io,
          "dataset: supplied policies do not match the recorded hashes");
  for (Index t = 0; t < data.size(); ++t) {
    const Index s = data.states[static_cast<std::size_t>(t)], a = data.actions[static_cast<std::size_t>(t)];
    require(behavior->probs(s, a) > 0, ErrorCode::io, "dataset: logged action has zero behavior probability");
    data.step_ratios.push_back(target->probs(s, a) / behavior->probs(s, a));
    if (!target_supported_at(*behavior, *target, s)) ++data.support_violations;
  }
  return data;
}

void write_trace_csv(const fs::path& path, const Trace<double>& trace) {
  auto out = open_out(path);
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records)
    out << r.epoch << ',' << r.agent << ',' << format_double(r.emp_error) << ','
        << format_double(r.consensus_gap) << ',' << format_double(r.msd) << ',' << r.grad_evals << ','
        << r.comm_rounds << '\n';
  finish(out, path);
}

void write_curves_csv(const fs::path& path, const Curve<double>& c) {
  auto out = open_out(path);
  out << kCurveHeader << '\n';
  const auto at = [](const std::vector<double>& v, std::size_t i) {
    return i < v.size() ? v[i] : std::numeric_limits<double>::quiet_NaN();
  };
  for (std::size_t i = 0; i < c.lambdas.size(); ++i)
    out << format_double(c.lambdas[i]) << ',' << format_double(at(c.exact_bias, i)) << ','
        << format_double(at(c.approx_bias, i)) << ',' << format_double(at(c.empirical_variance, i)) << ','
        << format_double(at(c.approx_variance, i)) << '\n';
  finish(out, path);
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  finish(out, path);
}

}  // namespace fdpe::io
