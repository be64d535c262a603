#pragma once

#include <string>
#include <vector>

namespace hogwild::cli {

// Runs the experiment tool in-process. Returns the process exit code:
// 0 success, 2 usage or configuration error, 3 numeric failure.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace hogwild::cli
