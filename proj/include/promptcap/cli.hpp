#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace promptcap {

// Runs one `promptcap` invocation; args exclude the program name. Returns
// 0 ok, 1 usage, 2 data, 3 numeric.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace promptcap
