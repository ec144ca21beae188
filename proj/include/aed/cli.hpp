#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aed {

/// Runs the `aed` command line. `args[0]` is the program name. The report
/// goes to `out`, diagnostics to `err`. Returns the exit code: 0 ok,
/// 2 invalid input or usage, 3 runtime failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aed
