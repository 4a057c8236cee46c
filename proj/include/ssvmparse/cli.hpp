#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace ssvmparse::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kOracleMismatch = 3 };

/// Entry point shared by the `ssvmparse` binary and the tests. `args`
/// excludes the program name. Machine-readable output goes to `out`, logs to
/// `err`.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

}  // namespace ssvmparse::cli
