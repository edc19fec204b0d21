#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace safeload::cli {

/// Runs one subcommand (gen | build | replay | ablate | sweep | report |
/// describe). `args` is argv without the program name. Results go to `out`
/// or to files named by flags; diagnostics go to `err`.
/// Returns 0 on success, 1 on usage errors, 2 on data or validation errors.
int run_cli(std::vector<std::string> args, std::ostream& out,
            std::ostream& err);

}  // namespace safeload::cli
