#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace percmap {

// Runs the command-line interface. Returns the process exit code:
// 0 success, 2 contract violation or bad usage, 3 I/O failure, 4 numerical
// failure. Diagnostics go to `err`, normal output to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace percmap
