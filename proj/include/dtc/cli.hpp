#pragma once

#include <iosfwd>

namespace dtc::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int { kOk = 0, kInvalid = 1, kFault = 2 };

/// Parses argv (argv[0] is the program name) and runs one subcommand.
/// Diagnostics go to `err`, the run directory and summaries to `out`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dtc::cli
