#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ernet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Entry point shared by the `ernet` binary and the tests. `args` excludes
/// the program name. Reports go to `out`; progress, usage and errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace ernet::cli
