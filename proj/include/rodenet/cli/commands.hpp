#pragma once

#include <ostream>

namespace rodenet::cli {

/// Parses the arguments and runs a subcommand (simulate, train, sample or
/// evaluate). Returns the process exit code: 0 on success, 2 for usage and
/// configuration errors, 1 for any other failure. Failures print one JSON
/// object {"error": {"category": ..., "message": ...}} to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rodenet::cli
