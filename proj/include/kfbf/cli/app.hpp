#pragma once

#include <ostream>

namespace kfbf::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kDataFormat = 3,
  kContract = 4,
};

/// Entry point of the `kfbf` tool. Subcommands: gen-data, train, eval,
/// transfer, ablate, bench. Every flag `--some-name` may also be given as
/// `some_name = value` in the file passed to `--config`; flags win.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kfbf::cli
