#ifndef FDPE_VERIFY_HPP
#define FDPE_VERIFY_HPP

#include "fdpe/io.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fdpe {

struct VerifyOptions {
  std::uint64_t seed = 1;
  Index agents = 4;
  /// "" or "corrupt-L": perturb the combination matrix before it is checked.
  std::string inject;
  /// Samples for the unbiasedness check.
  Index samples = 100000;
};

struct PropertyResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<PropertyResult> verify(const VerifyOptions& options);
io::json to_json(const std::vector<PropertyResult>& results);

}  // namespace fdpe

#endif  // FDPE_VERIFY_HPP
