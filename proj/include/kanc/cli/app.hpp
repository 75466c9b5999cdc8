#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace kanc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;     // bad arguments, config, or missing files
inline constexpr int kExitDiverged = 3;  // numerical divergence, partial artifacts kept

// Subcommands gen-data, train, eval, derivs, symbolic, report. args[0] is
// the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kanc::cli
