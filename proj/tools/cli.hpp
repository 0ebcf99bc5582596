#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gps::cli {

// Exit codes: 0 success, 2 validation, 3 numerical or infeasible.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gps::cli
