#pragma once

#include <iosfwd>

namespace laptool {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_numeric = 3 };

/// Entry point of the `laptool` command line; never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace laptool
