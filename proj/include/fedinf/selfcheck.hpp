#pragma once

#include <ostream>

namespace fedinf {

/// Runs the built-in cross-check suite: frozen reference points, closed
/// forms recomputed from first principles, finite-difference gradient
/// probes, kernel-variant agreement, and stream determinism.  Prints one
/// line per check; returns the number of failures.
int run_selftest(std::ostream& out);

}  // namespace fedinf
