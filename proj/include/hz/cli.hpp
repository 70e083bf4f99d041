#pragma once

namespace hz {

// Parses argv and runs one subcommand. Returns the process exit code:
// 0 success, 2 bad usage or contradictory configuration, 3 unreadable or
// inconsistent input data, 4 a verification command found a violation,
// 1 anything else.
int run_cli(int argc, char** argv);

}  // namespace hz
