#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rvsim::cli {

/// Batch runner. Returns 0 when the program halted, 2 when the cycle budget
/// ran out and 1 for any input error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rvsim::cli
