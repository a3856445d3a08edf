#ifndef FDPE_CORE_HPP
#define FDPE_CORE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fdpe {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

enum class ErrorCode {
  invalid_argument,
  internal,
  chain_not_ergodic,
  generation_failed,
  degenerate_features,
  singular_weighting,
  unsupported_off_policy,
  invalid_region,
  insufficient_data,
  index_out_of_range,
  assumption_violation,
  not_connected,
  divergence,
  config,
  io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::internal: return "internal";
    case ErrorCode::chain_not_ergodic: return "chain-not-ergodic";
    case ErrorCode::generation_failed: return "generation-failed";
    case ErrorCode::degenerate_features: return "degenerate-features";
    case ErrorCode::singular_weighting: return "singular-weighting";
    case ErrorCode::unsupported_off_policy: return "unsupported-off-policy";
    case ErrorCode::invalid_region: return "invalid-region";
    case ErrorCode::insufficient_data: return "insufficient-data";
    case ErrorCode::index_out_of_range: return "index-out-of-range";
    case ErrorCode::assumption_violation: return "assumption-violation";
    case ErrorCode::not_connected: return "not-connected";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a stable, machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

// ---------------------------------------------------------------------------
// Diagnostics sink. Warnings (ill-conditioned solves, assumption checks) are
// routed here; the default writes to stderr.

using DiagnosticSink = std::function<void(const std::string&)>;

inline DiagnosticSink& diagnostic_sink() {
  static DiagnosticSink sink = [](const std::string& msg) {
    std::cerr << "fdpe: warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(const std::string& message) {
  if (diagnostic_sink()) diagnostic_sink()(message);
}

// ---------------------------------------------------------------------------
// Randomness. The engine is std::mt19937_64, whose output sequence is fixed by
// the standard; all derived draws below are implemented here (not via the
// implementation-defined std distributions) so results replay bit-exactly on
// every platform.

inline constexpr std::string_view kRngAlgorithm = "mt19937_64+splitmix64/v1";

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

/// Seed of the named sub-stream `name` of a root seed, e.g. "data.agent_3".
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name) {
  return splitmix64(root ^ splitmix64(fnv1a64(name)));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Unbiased integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t draw;
    do {
      draw = engine_();
    } while (draw >= limit);
    return draw % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Draw from a discrete distribution given by non-negative weights summing to ~1.
  template <typename Derived>
  Index categorical(const Eigen::DenseBase<Derived>& probs) {
    const double u = uniform();
    double acc = 0.0;
    Index last_positive = -1;
    for (Index i = 0; i < probs.size(); ++i) {
      const double p = static_cast<double>(probs(i));
      if (p <= 0.0) continue;
      last_positive = i;
      acc += p;
      if (u < acc) return i;
    }
    return last_positive;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Linear algebra helpers.

/// Solve `lhs * x = rhs` with a pivoted LU, warning when the system is badly
/// conditioned and throwing `code` when it is numerically singular.
template <typename Scalar, typename Rhs>
Matrix<Scalar> solve_checked(const Matrix<Scalar>& lhs, const Eigen::MatrixBase<Rhs>& rhs,
                             const char* what,
                             ErrorCode code = ErrorCode::internal) {
  require(lhs.rows() == lhs.cols() && lhs.rows() == rhs.rows(),
          ErrorCode::invalid_argument, std::string(what) + ": dimension mismatch");
  Eigen::PartialPivLU<Matrix<Scalar>> lu(lhs);
  const Scalar rcond = lu.rcond();
  if (!(rcond > Scalar(0)) || !std::isfinite(static_cast<double>(rcond)) ||
      rcond < std::numeric_limits<Scalar>::epsilon()) {
    throw Error(code, std::string(what) + ": singular system (rcond=" +
                          std::to_string(static_cast<double>(rcond)) + ")");
  }
  if (rcond < Scalar(1e-12)) {
    warn(std::string(what) + ": condition number above 1e12 (rcond=" +
         std::to_string(static_cast<double>(rcond)) + ")");
  }
  return lu.solve(rhs);
}

template <typename Scalar>
Scalar max_abs_or_zero(const Matrix<Scalar>& m) {
  return m.size() == 0 ? Scalar(0) : m.cwiseAbs().maxCoeff();
}

/// Largest eigenvalue of a symmetric matrix.
template <typename Derived>
typename Derived::Scalar lambda_max_symmetric(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> sym = (m + m.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

template <typename Derived>
typename Derived::Scalar lambda_min_symmetric(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> sym = (m + m.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

template <typename Derived>
typename Derived::Scalar sigma_min(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::JacobiSVD<Matrix<Scalar>> svd(m);
  const auto& sv = svd.singularValues();
  return sv.size() == 0 ? Scalar(0) : sv(sv.size() - 1);
}

}  // namespace fdpe

#endif  // FDPE_CORE_HPP
