#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace rpcag::cli {

// Runs one rpcag command. args[0] is the command name (no program name).
// Returns 0 on success, 1 on a library error, 2 on a usage error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Rebuilds the argument list recorded in a run manifest.
std::vector<std::string> argv_from_manifest(const nlohmann::ordered_json& manifest);

}  // namespace rpcag::cli
