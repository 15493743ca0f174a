#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dib {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Finite-difference gradient checks of both losses, closed-form KL and
// Bhattacharyya against sampling / quadrature, beta schedule endpoints, and a
// checkpoint round trip.
std::vector<CheckResult> run_selfcheck(std::uint64_t seed = 20240611);

}  // namespace dib
