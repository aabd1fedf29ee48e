#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace slsnet::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

/// Runs one subcommand. `args` excludes the program name. Errors are reported
/// on `err` and mapped to an exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace slsnet::cli
