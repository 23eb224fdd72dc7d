#pragma once

#include <iosfwd>

namespace flowcal {

// Exit codes: 0 success, 1 runtime/data error, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace flowcal
