#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"

namespace progeval::cli {

const std::vector<std::string>& command_names();

/// Runs one command against `config`, writing artifacts under config.dir().
/// Progress goes to `log`. Throws progeval::Error.
void run_command(const std::string& command, const RunConfig& config, std::ostream& log);

/// Full command-line entry point: parses flags, runs the command, and turns
/// failures into a one-line JSON error record on `err`. Returns the exit code.
int run_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace progeval::cli
