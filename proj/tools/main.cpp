#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "fairgrid/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Fairness-aware grid search over estimators, mitigations and thresholds"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only log errors");

  fairgrid::RunCommand run;
  int jobs = -1;
  auto* run_cmd = app.add_subcommand("run", "Evaluate every grid cell and select the best model");
  run_cmd->add_option("--config", run.config, "YAML or JSON run config (a run manifest also works)")
      ->required();
  run_cmd->add_option("--set", run.overrides, "Override a config value, e.g. --set cv.k=5 (repeatable)");
  run_cmd->add_option("--jobs", jobs, "Worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);

  fairgrid::ReportCommand report;
  std::size_t top = 0;
  std::string out_dir;
  std::string grouping = "bm_base";
  auto* report_cmd = app.add_subcommand("report", "Correlation and mitigation-effect tables from results.csv");
  report_cmd->add_option("--results", report.results, "results.csv written by run")->required();
  report_cmd->add_option("--top", top, "Also list the N lowest-cost cells")->check(CLI::PositiveNumber);
  report_cmd->add_option("--output-dir", out_dir, "Where to write the reports");
  report_cmd->add_option("--grouping", grouping, "Effect scenario grouping")
      ->check(CLI::IsMember({"bm", "bm_base", "cell"}));
  report_cmd->add_option("--significance", report.effects.significance, "Significance level of the U-test");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(fairgrid::kExitConfig);
  }

  spdlog::set_level(verbose ? spdlog::level::debug : (quiet ? spdlog::level::err : spdlog::level::info));

  if (*run_cmd) {
    if (jobs >= 0) run.jobs = static_cast<unsigned>(jobs);
    return fairgrid::cmd_run(run);
  }
  if (top > 0) report.top = top;
  if (!out_dir.empty()) report.output_dir = out_dir;
  report.effects.grouping = fairgrid::parse_scenario_grouping(grouping);
  return fairgrid::cmd_report(report);
}
