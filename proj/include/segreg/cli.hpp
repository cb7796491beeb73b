#pragma once

// Command-line front end. One subcommand per invocation; outputs are staged in memory
// and written (atomically, file by file) only after the command has succeeded.
//
// Exit codes: 0 success, 1 usage, 2 data error (unreadable or invalid input, bad
// configuration), 3 numerical failure.

#include <ostream>
#include <string>
#include <vector>

namespace segreg::cli {

enum ExitCode { ok = 0, usage = 1, data_error = 2, numerical_failure = 3 };

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);
int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace segreg::cli
