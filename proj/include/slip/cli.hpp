#pragma once

#include <iosfwd>

namespace slip::cli {

/// Exit codes: 0 success, 1 internal error, 2 user or input error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUser = 2;

/// Runs the `slip` command line (synth, train, eval, ablate, heatmap).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace slip::cli
