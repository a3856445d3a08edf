#ifndef FDPE_IO_HPP
#define FDPE_IO_HPP

#include "fdpe/estimators.hpp"
#include "fdpe/features.hpp"
#include "fdpe/mdp.hpp"
#include "fdpe/network.hpp"
#include "fdpe/oracle.hpp"
#include "fdpe/sampler.hpp"
#include "fdpe/solver.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>

namespace fdpe::io {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kGenerator = "mt19937_64/splitmix64";

json to_json(const Matrix<double>& m);
json to_json(const Vector<double>& v);
Matrix<double> matrix_from_json(const json& j);
Vector<double> vector_from_json(const json& j);

json to_json(const Mdp<double>& mdp);
Mdp<double> mdp_from_json(const json& j);
json to_json(const Policy<double>& policy);
Policy<double> policy_from_json(const json& j);
json to_json(const FeatureMap<double>& features);
FeatureMap<double> features_from_json(const json& j);
json to_json(const Topology<double>& topology);
Topology<double> topology_from_json(const json& j);
json to_json(const EstimateSet<double>& set);
EstimateSet<double> estimates_from_json(const json& j);
json to_json(const GateReport<double>& gate);

/// Header lines "# key: value", then "t,s,a,r" rows; the final state is a
/// header entry.
void write_dataset_csv(const std::filesystem::path& path, const Dataset<double>& data,
                       Index horizon);
/// Policies are not stored in the file and must be supplied.
Dataset<double> read_dataset_csv(const std::filesystem::path& path,
                                 std::shared_ptr<const Policy<double>> behavior,
                                 std::shared_ptr<const Policy<double>> target);

inline constexpr const char* kTraceHeader =
    "epoch,agent,emp_error,consensus_gap,msd,grad_evals,comm_rounds";
inline constexpr const char* kCurveHeader =
    "lambda,exact_bias,approx_bias,empirical_variance,approx_variance";
inline constexpr const char* kFrontierHeader =
    "J,batch_size,epochs,grad_evals,comm_rounds,final_error,reached";

void write_trace_csv(const std::filesystem::path& path, const Trace<double>& trace);
void write_curves_csv(const std::filesystem::path& path, const Curve<double>& curve);

void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// %.17g, with nan/inf spelled out.
std::string format_double(double x);

}  // namespace fdpe::io

#endif  // FDPE_IO_HPP
