#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fairgrid/csv.hpp"
#include "fairgrid/metrics.hpp"
#include "fairgrid/search.hpp"

namespace fairgrid {

// One row of results.csv.
struct ResultRow {
  std::string cell_id;
  std::string base;
  std::string params;
  std::string bm;
  double tau = 0.0;
  std::array<std::optional<double>, kMetricCount> mean{};
  std::array<std::optional<double>, kMetricCount> std{};
  std::array<std::size_t, kMetricCount> undefined{};
  std::optional<double> cost;
  std::string status;
  std::array<std::vector<std::optional<double>>, kMetricCount> folds{};

  const std::optional<double>& mean_of(MetricId id) const { return mean[index_of(id)]; }
  const std::vector<std::optional<double>>& folds_of(MetricId id) const { return folds[index_of(id)]; }
};

using ResultTable = std::vector<ResultRow>;

ResultRow to_result_row(const EvaluationRecord& record);
ResultTable to_result_table(const std::vector<EvaluationRecord>& records);

// Column order: cell_id, base, params, bm, tau, <m>_mean and <m>_std per
// metric, <m>_undef per metric, cost, status, <m>_folds per metric.
// Undefined values are empty cells; fold lists are ';'-joined.
std::vector<std::string> result_header();
CsvTable result_csv(const ResultTable& table);
void write_results(const std::filesystem::path& path, const ResultTable& table);

// Throws DataError when a column is missing or a value does not parse.
ResultTable parse_results(const CsvTable& csv);
ResultTable read_results(const std::filesystem::path& path);

}  // namespace fairgrid
