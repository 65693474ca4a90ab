#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bwn {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // a verification suite failed or an unexpected error
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitFormat = 4,
};

/// Runs `bwn <args...>` in-process; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bwn
