#pragma once

#include <iosfwd>

namespace stcluster {

/// Exit codes of the command-line driver.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

/// Entry point of the `stcluster` command with subcommands fit, simulate,
/// summarize and generate.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stcluster
