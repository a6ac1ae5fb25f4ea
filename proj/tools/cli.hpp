#pragma once

// The `polyrnn` command line: train, grad-profile, ode-check and fit-decay.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data or file
// format error, 3 numerical divergence, 4 a verification check failed.

#include <iosfwd>
#include <string>
#include <vector>

namespace polyrnn::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kDiverged = 3,
  kCheckFailed = 4,
};

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
// Convenience overload; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace polyrnn::cli
