#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace huign {

// Entry point for the `huign` tool. args excludes the program name.
// Returns the process exit status; failures print one `error: ...` line to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace huign
