#pragma once

#include <ostream>

namespace swarmloc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Parses argv, runs one subcommand and returns its exit code. Results go to
/// `out`, the resolved config and diagnostics to `err`. Never throws.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace swarmloc::cli
