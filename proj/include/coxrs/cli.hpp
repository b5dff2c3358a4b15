#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace coxrs {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitConvergence = 2;

/// Entry point of the `coxrs` tool. `args` excludes the program name.
/// Subcommands: solve, sweep, calibrate, simulate, compare, selfcheck.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_command(int argc, char** argv);

/// "a,b,c", "lin:START:STOP:COUNT" or "log:START:STOP:COUNT".
std::vector<double> parse_grid(const std::string& text);

}  // namespace coxrs
