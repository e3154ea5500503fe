#pragma once

#include <string>
#include <vector>

namespace fedsamp {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Oracle and property checks for the numerical core: enumeration against
/// the sampling/aggregation expectations, brute-force grids against the KKT
/// solver, finite differences against the analytic gradients, and the
/// closed-form reductions. Each check is self-contained and seeded.
std::vector<CheckResult> run_verification_suite();

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace fedsamp
