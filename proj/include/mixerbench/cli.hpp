#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mixerbench {

// Entry point of the mixerbench tool; args[0] is the program name.
// Returns the process exit code (2 for usage errors).
int run_cli(const std::vector<std::string>& args);

struct SelftestCheck {
  std::string name;
  double value = 0;  // measured error
  double tolerance = 0;
  bool passed = false;
};

// Oracle-equivalence and gradient checks; one line per check goes to `log`.
std::vector<SelftestCheck> run_selftest(std::ostream& log);

}  // namespace mixerbench
