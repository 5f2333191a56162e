#pragma once

#include <string>
#include <vector>

namespace ikdr::cli {

/// Runs one command. Returns 0 on success, 1 on input errors, 2 on numerical failure.
int run(int argc, char** argv);
/// Same, with the program name omitted from `args`.
int run(const std::vector<std::string>& args);

}  // namespace ikdr::cli
