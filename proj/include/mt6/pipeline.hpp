#pragma once

#include <string>
#include <vector>

#include "mt6/config.hpp"

namespace mt6 {

// Subcommands: gen-data, corrupt, pretrain, finetune, eval, sweep-noise.
std::vector<std::string> CommandNames();
const std::vector<KeySpec>& CommandSchema(const std::string& command);

// Resolves `user` against the command's schema, writes the resolved config
// next to the outputs and runs the command. All output files are written
// atomically.
void RunCommand(const std::string& command, const RunConfig& user);

}  // namespace mt6
