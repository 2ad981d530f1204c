#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sqsn::cli {

/// Exit codes: 0 optimal, 2 solved but not optimal, 1 input or usage error.
inline constexpr int kExitOptimal = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitNotOptimal = 2;

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sqsn::cli
