#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "povmap/config.hpp"

namespace povmap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitInternalError = 2;

/// Runs `povmap <subcommand> [flags]`. `args` excludes the program name.
/// Environment overrides are read through `env` (POVMAP_<KEY>).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, Settings::EnvLookup env);

/// Same, reading overrides from the process environment.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace povmap::cli
