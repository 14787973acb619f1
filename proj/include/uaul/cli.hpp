#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace uaul::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,       // anything not covered below
  kUsage = 2,         // unknown subcommand/flag, bad flag value
  kMissingFile = 3,
  kConfigError = 4,   // config file or flag violates a UaulConfig invariant
  kDataError = 5,     // malformed dataset, checkpoint or template text
  kDiverged = 6,
};

/// Runs one subcommand. `args` excludes the program name. Results go to
/// `out`, progress and error messages to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace uaul::cli
