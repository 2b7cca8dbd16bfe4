#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fedsel {

// Exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitValidation = 2 };

// Entry point behind the `fedsel` binary. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fedsel
