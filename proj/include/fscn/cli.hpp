#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fscn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // gradcheck failure, non-finite training
inline constexpr int kExitUsage = 2;    // bad arguments, bad config, missing files

/// Subcommands: train, eval, ablate, gradcheck, predict, synth.
/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace fscn::cli
