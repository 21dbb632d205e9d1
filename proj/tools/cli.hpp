#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace spasvc::cli {

/// Runs the `spasvc` command line in-process and returns the exit code:
/// 0 success, 1 usage error, 2 data error, 3 numeric failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spasvc::cli
