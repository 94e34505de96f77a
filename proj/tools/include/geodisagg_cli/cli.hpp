#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace geodisagg::cli {

/// Runs one command line (without the program name). Returns the exit status;
/// diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace geodisagg::cli
