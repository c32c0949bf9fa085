// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace codeforge::cli {

/// Runs one command line. Exit codes: 0 success, 1 operational error (one
/// JSON line on `err`), 2 usage error or unknown subcommand.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace codeforge::cli
