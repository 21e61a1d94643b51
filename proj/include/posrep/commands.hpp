#pragma once

#include "posrep/config.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace posrep {

enum ExitCode : int { kExitOk = 0, kExitIo = 1, kExitConfig = 2, kExitNumerical = 3, kExitFormat = 4 };

// Each command writes resolved.conf into cfg.out before producing outputs.
void cmd_gen_data(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
EvalReport cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint);
void cmd_analyze(const RunConfig& cfg, const std::vector<std::filesystem::path>& checkpoints);

// Full command line (argv[0] included). Returns the process exit code.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace posrep
