#pragma once

#include "edct/http_transport.hpp"
#include "edct/gateway.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace edct {

/// Exit codes of the `edct` tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Hooks for driving the CLI in-process.
struct CliEnvironment {
  EnvLookup env = process_env;
  /// When set, replaces the default transport resolver.
  TransportResolver resolver;
};

/// Runs one `edct` invocation. args[0] is the program name. Normal output
/// goes to `out`; errors are written to `err` as one JSON object per line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const CliEnvironment& environment = {});

}  // namespace edct
