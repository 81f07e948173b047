#pragma once

#include <ostream>

namespace maeast {

/// Entry point behind the `maeast` tool. Returns 0 on success, 2 for a
/// configuration or usage error (the offending key is named on `err`), 1 for
/// any runtime fault.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace maeast
