#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace coloc {

struct PropertyResult {
  std::string name;
  int instances = 0;
  int failures = 0;
  // most adversarial margin seen; nonnegative margins satisfy the property
  double worst_slack = std::numeric_limits<double>::infinity();
  std::string note;
  bool passed() const { return failures == 0; }
};

struct VerifyOptions {
  int instances = 200;
  std::uint64_t seed = 20240517;
  int cross_samples = 20;
  // test-only negative control: feeds the naive result through the
  // consistency sweep in place of the bounded update, which must fail
  bool sabotage_naive_as_dmv = false;
};

/// Random-instance sweeps of the update-rule guarantees and solver contracts.
std::vector<PropertyResult> run_property_suites(const VerifyOptions& opt);

}  // namespace coloc
