#pragma once

#include <string>
#include <vector>

namespace meshswap {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  /// Route queries with perturbed partition markers (mutation check: the
  /// search suite must fail).
  bool fault_markers = false;
};

/// Brute-force oracle suites: search, interpolation, coordinates,
/// serial-equivalence, golden.
std::vector<SuiteResult> run_verify(const VerifyOptions& opts = {});

/// Deterministic text summary of the pinned golden run.
std::string golden_run_summary();

/// Expected value of golden_run_summary() for this build.
const std::string& golden_reference();

}  // namespace meshswap
