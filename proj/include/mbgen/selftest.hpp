#pragma once

#include <iosfwd>

namespace mbgen {

// Runs the built-in oracle and invariant checks, printing one line per check.
// Returns the number of failures (0 means a healthy build).
int run_selftest(std::ostream& out);

}  // namespace mbgen
