#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cxr {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,   // usage, config or architecture error
  kExitDataset = 3,  // dataset, input file or missing run artifacts
  kExitNumeric = 4,  // non-finite loss during training
};

/// Environment variable naming the default output root for `crossval`.
inline constexpr const char* kOutRootEnv = "CXRNET_OUT_ROOT";

/// Runs one command (`args[0]` is the program name). Data goes to `out`,
/// diagnostics and the final `status=... exit=N` line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cxr
