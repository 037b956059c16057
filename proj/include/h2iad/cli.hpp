#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace h2iad {

// Exit codes of the command-line front end.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumeric = 3,
};

// Runs `h2iad <subcommand> ...`; args exclude the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace h2iad
