#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace slbr {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitCompat = 3;
inline constexpr int kExitNumeric = 4;

// Entry point of the `slbr` tool: synth | train | eval | infer | ablate.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace slbr
