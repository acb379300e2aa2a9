#pragma once

#include <iosfwd>

namespace dqrp::cli {

enum ExitCode : int { kSuccess = 0, kFailure = 1, kUsage = 2 };

/// Runs the `dqrp` command line. Normal output goes to `out`, diagnostics and
/// progress to `err`. Returns 0 on success, 1 on verification or validation
/// failure, 2 on usage errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dqrp::cli
