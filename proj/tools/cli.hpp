#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace banditmt::cli {

/// Runs one subcommand. Returns 0 on success, 1 when the operation fails and
/// 2 on usage errors (unknown subcommand, missing or malformed flags).
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace banditmt::cli
