#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sphdiff::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,        // unknown subcommand or bad arguments
  kBadFile = 3,      // malformed input file
  kBadConfig = 4,    // config validation failure
  kBadInput = 5,     // well-formed input violating a precondition
  kNumeric = 6,      // non-finite values during training or sampling
  kCheckFailed = 7,  // gradcheck found an error above tolerance
};

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sphdiff::cli
