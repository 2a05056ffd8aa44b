#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tipsc::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,       // anything not covered below
  kUsage = 2,         // bad command line, malformed config, invalid parameters
  kNumerical = 3,     // solver, calibration or degenerate-projection failures
  kSelftestFailed = 4,
};

/// Runs the command line `args` (without the program name). Results go to
/// `out`; errors are written to `err` as one JSON object per line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tipsc::cli
