#pragma once

#include <string>
#include <vector>

namespace malcom {

// Exit codes: 0 success, 2 missing/unreadable inputs, 3 malformed config,
// artifacts, or invocation, 4 numerical divergence, 1 anything else.
// Failures print a single machine-readable JSON object to stderr.
int cli_dispatch(const std::vector<std::string>& args);
int cli_dispatch(int argc, const char* const* argv);

}  // namespace malcom
