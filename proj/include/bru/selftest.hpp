#pragma once

// Built-in verification suite behind `bru_bench selftest`.

#include <iosfwd>
#include <string>
#include <vector>

namespace bru {

struct SelftestFaults {
  bool eru_derivative_doubled = false;  ///< analytic ERU slope multiplied by 2
  bool oru2_init_two_over_n = false;    ///< ORU r=2 weights drawn with variance 2/n
};

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestReport {
  std::vector<SelftestCheck> checks;

  bool passed() const;
  std::size_t failures() const;
  void print(std::ostream& os) const;
};

/// Activation properties, per-activation and per-primitive gradient checks,
/// parser golden fixtures and initialisation variance statistics.
SelftestReport run_selftest(const SelftestFaults& faults = {});

}  // namespace bru
