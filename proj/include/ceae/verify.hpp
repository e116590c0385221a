#pragma once

#include <string>
#include <vector>

namespace ceae {

struct VerifyResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Fast self-verification: gradient checks on both loss paths, the loss
/// identities with their worked examples, the stub cycle optimum, the STFT
/// frame-count law, and a checkpoint round trip with bit-exact resume.
/// inject_gradient_bug corrupts one analytic gradient (negative control).
std::vector<VerifyResult> run_verification(uint64_t seed = 42, bool inject_gradient_bug = false);

/// Prints the pass/fail table to out; returns true iff everything passed.
bool print_verification(const std::vector<VerifyResult>& results, std::string* out = nullptr);

}  // namespace ceae
