#pragma once

#include <atomic>
#include <ostream>
#include <string>
#include <vector>

namespace sur::cli {

/// Runs one invocation. `args` excludes the program name. Returns the exit
/// code: 0 success, 2 bad input, 3 numerical failure, 4 internal error,
/// 130 interrupted (partial results written).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::atomic<bool>* cancel = nullptr);

} // namespace sur::cli
