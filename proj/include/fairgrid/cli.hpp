#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fairgrid/stats.hpp"

namespace fairgrid {

// Exit statuses of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNoSelection = 4,
};

// Environment variable that overrides the configured output directory.
inline constexpr const char* kOutputDirEnv = "FAIRGRID_OUTPUT_DIR";

struct RunCommand {
  std::filesystem::path config;
  std::vector<std::string> overrides;
  std::optional<unsigned> jobs;
};

// Writes results.csv, best_model.json and run_manifest.json. Errors are
// logged and mapped onto ExitCode.
int cmd_run(const RunCommand& command);

struct ReportCommand {
  std::filesystem::path results;
  std::optional<std::size_t> top;
  // Defaults to the directory holding the results file.
  std::optional<std::filesystem::path> output_dir;
  EffectOptions effects;
};

// Writes corr_acc*.csv, corr_fair*.csv, bm_effects.csv,
// bm_effects_summary.csv and, with `top`, top.csv.
int cmd_report(const ReportCommand& command);

}  // namespace fairgrid
