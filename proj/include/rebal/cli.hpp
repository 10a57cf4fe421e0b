#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace rebal {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitSolver = 3,
  kExitStepLimit = 4,
};

/// Runs the command-line tool; `args[0]` is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rebal
