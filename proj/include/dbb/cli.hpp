#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dbb {

// Exit codes: 0 success, 1 numerical divergence, 2 configuration error.
constexpr int kExitOk = 0;
constexpr int kExitDiverged = 1;
constexpr int kExitConfig = 2;

constexpr const char* kVersion = "0.1.0";

struct Command {
  std::string subcommand;  // simulate | mc-price | solve | experiment | report
  std::filesystem::path config;
  std::vector<std::string> overrides;  // section.key=value
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir;  // resolved: --out, else $DBB_OUTPUT_DIR, else ./dbb-out
  std::size_t mc_paths = 100000;  // mc-price budget
  std::size_t mc_steps = 1000;
  std::size_t n_steps = 40;  // simulate grid
  std::size_t batch = 64;    // simulate batch
  std::size_t workers = 0;
  bool loss_curve = false;
  std::filesystem::path runs_file;  // report input
};

// Throws ConfigError (usage problems print to stderr inside run_cli instead).
Command parse_args(const std::vector<std::string>& argv);

int dispatch(const Command& cmd);

// Full entry point: parse + dispatch with the exit-code mapping.
int run_cli(int argc, const char* const* argv);

}  // namespace dbb
