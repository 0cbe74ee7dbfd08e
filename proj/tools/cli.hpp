// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace modgate::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (args[0] is the program name).
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

}  // namespace modgate::cli
