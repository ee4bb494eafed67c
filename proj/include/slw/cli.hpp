#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace slw {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitTuning = 4;

/// Entry point of the slwlab binary. `args` excludes the program name.
/// Results go to `out`, diagnostics to `err`; with --error-json a failure
/// also prints one JSON object to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace slw
