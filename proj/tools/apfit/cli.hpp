// Command-line front end: fit, bake, render, gradcheck, subdivide, info.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#pragma once

#include <ostream>

namespace apfit::cli {

inline constexpr int exit_ok      = 0;
inline constexpr int exit_runtime = 1;
inline constexpr int exit_usage   = 2;

// Parses argv (argv[0] is the program name) and runs one subcommand.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace apfit::cli
