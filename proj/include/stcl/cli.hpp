#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stcl {

// Exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,      // bad arguments or config
    kExitData = 2,       // unreadable, malformed or incompatible data
    kExitInternal = 3,   // invariant violation
};

// Runs one command line (args excludes the program name). Normal output goes
// to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stcl
