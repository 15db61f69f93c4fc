#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace deepstreet::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

// Runs one `deepstreet <command> [flags]` invocation. args[0] is the program
// name. Diagnostics go to `err`, progress to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deepstreet::cli
