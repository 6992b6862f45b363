#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace damgan::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitNumerical = 3 };

/// Entry point of the `damgan` tool: args[0] is the program name, then a
/// subcommand (prepare, train, eval, inpaint, grid) and its flags.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace damgan::cli
