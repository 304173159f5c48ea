#pragma once

#include <iosfwd>

namespace blowup::cli {

// Dispatches the subcommands (classify, survival, resolvent, compare,
// catalog).  Returns 0 on success, 2 on configuration errors, 3 on
// numerical aborts.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace blowup::cli
