#pragma once

#include <ostream>

namespace gtasr::cli {

/// Parses argv and runs one subcommand. Returns 0 on success, 1 on operational
/// failure, 2 on usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gtasr::cli
