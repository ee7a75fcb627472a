#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "debris/error.hpp"

namespace debris {

/// 0 success, 1 usage or config, 2 data error, 3 numeric or training failure.
int exit_code_for(ErrorKind kind) noexcept;

/// Runs one command line (args[0] is the program name) and returns the exit
/// code. Errors are reported on `err`, never thrown.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace debris
