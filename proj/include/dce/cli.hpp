#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dce {

// Full command-line entry point, testable in-process. args excludes the
// program name. Returns 0 on success, 1 on validation errors, 2 on
// runtime/data errors; failures print one "error: ..." line to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dce
