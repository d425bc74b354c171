#pragma once

#include <ostream>

namespace psdmap {

/// Exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,  // anything not covered below
    kExitConfig = 2,   // malformed command line, config file or input data
    kExitSolver = 3,
    kExitIo = 4,
};

/// Runs one command. Progress goes to `out`; failures print a single JSON line to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace psdmap
