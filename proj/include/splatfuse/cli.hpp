// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace splatfuse {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitNoMatch = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitOracle = 4;

/// Runs the command line `args` (without the program name). Never throws.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace splatfuse
