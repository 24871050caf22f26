#pragma once

#include <string>
#include <vector>

namespace aid {

/// Process exit codes of the aidsim tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitNumerical = 3,
};

/// Entry point of the aidsim tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace aid
