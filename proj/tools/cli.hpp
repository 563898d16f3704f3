#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace prosody::cli {

/// Runs one command line (argv[0] is the program name). Data goes to `out`,
/// diagnostics to `err`. Returns 0 on success, 1 on analysis failure and 2
/// on input or configuration errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace prosody::cli
