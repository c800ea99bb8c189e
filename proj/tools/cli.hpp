#pragma once

#include <iosfwd>

namespace gridnif::cli {

enum ExitCode : int {
  ok = 0,
  validation_failure = 1,
  certification_failure = 2,
  divergence = 3,
};

/// Entry point shared by the executable and the tests. Reports go to `out`,
/// errors to `err`; log lines follow GRIDNIF_LOG and go to stderr.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gridnif::cli
