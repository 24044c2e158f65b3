#pragma once
// Subcommand dispatch for the critdiff command-line driver.

#include <iosfwd>

namespace critdiff::cli {

// Exit codes: 0 success, 1 invalid input or configuration, 2 numeric failure
// (including failed acceptance criteria).
int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace critdiff::cli
