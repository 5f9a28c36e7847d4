#pragma once

#include <iosfwd>

namespace trimiga {

/// Whole command line: parse, merge --config with the flags, run, write artifacts.
/// Exit codes: 0 ok, 1 bad usage, 2 bad config, 3 internal check failed, 4 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace trimiga
