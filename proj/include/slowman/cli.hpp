#pragma once

// Command-line frontend: project, cascade, rpm, stability, region, sweep.

#include <iosfwd>
#include <string>

namespace slowman::cli {

enum ExitCode : int {
    kOk = 0,
    kValidation = 2,
    kDivergence = 3,
    kNonConvergence = 4,
};

/// Parses argv (argv[0] is the program name), runs the command and writes
/// results to the configured output (or `out`). Diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// printf("%.17g"); every emitted real goes through this.
std::string format_real(double v);

}  // namespace slowman::cli
