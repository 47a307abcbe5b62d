#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace radkg::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kDataError = 2,
    kNumerical = 3,
    kUndefinedResult = 4,  // evaluation produced no defined AUC (e.g. empty fold)
};

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnv = "RADKG_CONFIG";

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace radkg::cli
