#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace marlbc {

/// Entry point of the marlbc command-line tool. `args` excludes the program
/// name. Results go to `out`; progress and structured errors go to `err`.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace marlbc
