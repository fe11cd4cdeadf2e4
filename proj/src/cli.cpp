#include "fairgrid/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fairgrid/config.hpp"
#include "fairgrid/error.hpp"
#include "fairgrid/results.hpp"
#include "fairgrid/search.hpp"

namespace fairgrid {
namespace {

template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const RunError& e) {
    spdlog::error("{}", e.what());
    return kExitNoSelection;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kExitData;
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kExitInternal;
  }
}

std::filesystem::path resolve_output(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return fallback;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << '\n';
}

std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

int cmd_run(const RunCommand& command) {
  return guarded([&] {
    RunConfig cfg = load_run_config(command.config, command.overrides);
    if (command.jobs) cfg.run.jobs = *command.jobs;
    const std::filesystem::path out_dir = resolve_output(cfg.run.output_dir);
    const Dataset data = load_dataset(cfg.data);
    if (data.dropped_rows() > 0) spdlog::warn("dropped {} rows with a missing label or protected value", data.dropped_rows());

    const auto started = std::chrono::system_clock::now();
    const auto t0 = std::chrono::steady_clock::now();
    const RunResult result = run(cfg.grid, data, {cfg.run.jobs});
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::filesystem::create_directories(out_dir);
    write_results(out_dir / "results.csv", to_result_table(result.records));
    if (result.best) write_json(out_dir / "best_model.json", result.best_model);

    std::size_t failed = 0;
    for (const auto& r : result.records) failed += r.status == CellStatus::failed;
    nlohmann::json manifest = {{"fairgrid_version", FAIRGRID_VERSION},
                               {"config", cfg.to_json()},
                               {"seed", cfg.grid.seed},
                               {"started_at", utc_timestamp(started)},
                               {"wall_time_seconds", wall},
                               {"jobs", cfg.run.jobs},
                               {"rows", data.size()},
                               {"dropped_rows", data.dropped_rows()},
                               {"cells", result.records.size()},
                               {"failed_cells", failed},
                               {"skipped", result.skipped}};
    if (result.best) {
      const EvaluationRecord& best = result.records[*result.best];
      manifest["best_cell_id"] = best.cell.cell_id;
      manifest["best_cost"] = optional_json(best.cost);
    } else {
      manifest["best_cell_id"] = nullptr;
      manifest["best_error"] = result.best_error;
    }
    write_json(out_dir / "run_manifest.json", manifest);

    if (!result.best) throw RunError(result.best_error);
    const EvaluationRecord& best = result.records[*result.best];
    fmt::print("{} cells evaluated in {:.1f}s ({} failed)\n", result.records.size(), wall, failed);
    fmt::print("best cell {}: base={} params={} bm={} tau={} cost={}\n", best.cell.cell_id, best.cell.base_name(),
               canonical_params(best.cell.params), to_string(best.cell.mitigation), format_double(best.cell.tau),
               format_double(*best.cost));
    fmt::print("artifacts written to {}\n", out_dir.string());
    return static_cast<int>(kExitOk);
  });
}

int cmd_report(const ReportCommand& command) {
  return guarded([&] {
    if (command.top && *command.top == 0) throw ConfigError("--top must be >= 1");
    const ResultTable table = read_results(command.results);
    std::filesystem::path out_dir =
        command.output_dir ? *command.output_dir : resolve_output(command.results.parent_path());
    if (out_dir.empty()) out_dir = ".";
    std::filesystem::create_directories(out_dir);

    for (const auto& [family, stem] : {std::pair{MetricFamily::accuracy, "corr_acc"},
                                       std::pair{MetricFamily::fairness, "corr_fair"}}) {
      const CorrelationMatrix m = correlation_report(table, family);
      write_csv_file(out_dir / fmt::format("{}.csv", stem), correlation_csv(m, MatrixLayer::rho));
      write_csv_file(out_dir / fmt::format("{}_stars.csv", stem), correlation_csv(m, MatrixLayer::stars));
      write_csv_file(out_dir / fmt::format("{}_pvalues.csv", stem), correlation_csv(m, MatrixLayer::p));
      write_csv_file(out_dir / fmt::format("{}_n.csv", stem), correlation_csv(m, MatrixLayer::n));
    }

    const EffectAnalysis effects = bm_effect_analysis(table, command.effects);
    write_csv_file(out_dir / "bm_effects.csv", effects_csv(effects));
    write_csv_file(out_dir / "bm_effects_summary.csv", effects_summary_csv(effects));
    for (const std::string& s : effects.skipped) spdlog::debug("effects: {}", s);
    if (effects.scenarios.empty()) {
      fmt::print("note: no mitigated rows with a NONE counterpart; bm_effects.csv holds only its header\n");
    } else {
      fmt::print("{} effect scenarios ({} skipped)\n", effects.scenarios.size(), effects.skipped.size());
    }

    if (command.top) {
      std::vector<std::size_t> order(table.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ca = table[a].cost;
        const auto& cb = table[b].cost;
        if (ca.has_value() != cb.has_value()) return ca.has_value();
        if (ca && *ca != *cb) return *ca < *cb;
        return table[a].cell_id < table[b].cell_id;
      });
      order.resize(std::min(order.size(), *command.top));
      ResultTable top;
      for (std::size_t i : order) top.push_back(table[i]);
      write_results(out_dir / "top.csv", top);
      fmt::print("{:<4} {:<16} {:<5} {:<8} {:<5} {:>10}  {}\n", "rank", "cell_id", "base", "bm", "tau", "cost", "params");
      for (std::size_t r = 0; r < top.size(); ++r) {
        fmt::print("{:<4} {:<16} {:<5} {:<8} {:<5} {:>10}  {}\n", r + 1, top[r].cell_id, top[r].base, top[r].bm,
                   format_double(top[r].tau), top[r].cost ? fmt::format("{:.6f}", *top[r].cost) : "undefined",
                   top[r].params);
      }
    }
    fmt::print("reports written to {}\n", out_dir.string());
    return static_cast<int>(kExitOk);
  });
}

}  // namespace fairgrid
