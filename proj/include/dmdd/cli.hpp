#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dmdd {

/// Entry point of the `dmdd` tool. Returns 0 on success, 1 on usage errors
/// and 2 on runtime failures.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dmdd
