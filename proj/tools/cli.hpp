#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pclreid::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,    ///< bad arguments or configuration
  kData = 2,     ///< unreadable, malformed or unusable input
  kNumeric = 3,  ///< training produced a non-finite value
};

/// Runs one command. `argv[0]` is the program name. Results go to `out`,
/// one-line event records and diagnostics to `err`.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace pclreid::cli
