#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fmdt::cli {

/// Exit codes of the command-line tool.
enum Exit : int { ok = 0, io_error = 1, bad_config = 2 };

/// Runs one command line (without the program name). Normal output goes to
/// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace fmdt::cli
