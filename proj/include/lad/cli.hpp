#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lad {

// Entry point of the `lad` tool; `args` excludes the program name.
// Failures print one `error: <reason>` line to `err` and return nonzero.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lad
