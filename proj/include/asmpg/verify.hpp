#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace asmpg {

inline constexpr int kVerifySchemaVersion = 1;

struct VerifyCheck {
  std::string name;
  double computed = 0.0;
  double bound_or_reference = 0.0;
  bool pass = false;
};

struct VerifyReport {
  std::string suite;
  std::vector<VerifyCheck> checks;

  bool pass() const;
  nlohmann::json to_json() const;
};

struct VerifyOptions {
  /// Node/leaf budget for each individual enumeration.
  double budget = 2e7;
  int workers = 1;
  /// Random parameter probes for the gradient suites.
  int probes = 20;
};

/// Suite names accepted by run_verify.
const std::vector<std::string>& verify_suites();

/// Runs one suite ("theorem1", "theorem2", "smoothness", "softmax_bounds",
/// "ideal_asd") or "all". Throws BudgetError naming the check that ran out of
/// budget and ConfigError for an unknown suite.
VerifyReport run_verify(const std::string& suite, const VerifyOptions& opts = {});

}  // namespace asmpg
