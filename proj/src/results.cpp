#include "fairgrid/results.hpp"

#include <charconv>

#include <fmt/format.h>

#include "fairgrid/error.hpp"

namespace fairgrid {
namespace {

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::string join_folds(const std::vector<std::optional<double>>& folds) {
  std::string out;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    if (i > 0) out += ';';
    out += cell(folds[i]);
  }
  return out;
}

std::string metric_column(MetricId id, std::string_view suffix) { return fmt::format("{}_{}", to_string(id), suffix); }

}  // namespace

ResultRow to_result_row(const EvaluationRecord& record) {
  ResultRow row;
  row.cell_id = record.cell.cell_id;
  row.base = record.cell.base_name();
  row.params = canonical_params(record.cell.params);
  row.bm = std::string(to_string(record.cell.mitigation));
  row.tau = record.cell.tau;
  for (MetricId id : kAllMetrics) {
    const auto i = index_of(id);
    row.mean[i] = record.summary[i].mean;
    row.std[i] = record.summary[i].std;
    row.undefined[i] = record.summary[i].undefined;
    row.folds[i] = record.summary[i].folds;
  }
  row.cost = record.cost;
  row.status = std::string(to_string(record.status));
  return row;
}

ResultTable to_result_table(const std::vector<EvaluationRecord>& records) {
  ResultTable table;
  table.reserve(records.size());
  for (const auto& r : records) table.push_back(to_result_row(r));
  return table;
}

std::vector<std::string> result_header() {
  std::vector<std::string> h = {"cell_id", "base", "params", "bm", "tau"};
  for (MetricId id : kAllMetrics) {
    h.push_back(metric_column(id, "mean"));
    h.push_back(metric_column(id, "std"));
  }
  for (MetricId id : kAllMetrics) h.push_back(metric_column(id, "undef"));
  h.push_back("cost");
  h.push_back("status");
  for (MetricId id : kAllMetrics) h.push_back(metric_column(id, "folds"));
  return h;
}

CsvTable result_csv(const ResultTable& table) {
  CsvTable csv;
  csv.header = result_header();
  for (const ResultRow& r : table) {
    std::vector<std::string> f = {r.cell_id, r.base, r.params, r.bm, format_double(r.tau)};
    for (std::size_t i = 0; i < kMetricCount; ++i) {
      f.push_back(cell(r.mean[i]));
      f.push_back(cell(r.std[i]));
    }
    for (std::size_t i = 0; i < kMetricCount; ++i) f.push_back(std::to_string(r.undefined[i]));
    f.push_back(cell(r.cost));
    f.push_back(r.status);
    for (std::size_t i = 0; i < kMetricCount; ++i) f.push_back(join_folds(r.folds[i]));
    csv.rows.push_back(std::move(f));
  }
  return csv;
}

void write_results(const std::filesystem::path& path, const ResultTable& table) {
  write_csv_file(path, result_csv(table));
}

namespace {

class RowReader {
 public:
  RowReader(const CsvTable& csv, std::size_t row) : csv_(csv), row_(row) {}

  const std::string& text(const std::string& column) const {
    const auto idx = csv_.column(column);
    if (!idx) throw DataError(fmt::format("results: missing column '{}'", column));
    return csv_.rows[row_][*idx];
  }

  std::optional<double> optional_real(const std::string& column) const { return parse_optional(text(column), column); }

  double real(const std::string& column) const {
    const auto v = optional_real(column);
    if (!v) throw DataError(fmt::format("results row {}: empty '{}'", row_ + 1, column));
    return *v;
  }

  std::size_t count(const std::string& column) const {
    const std::string& t = text(column);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) {
      throw DataError(fmt::format("results row {}: '{}' is not a count in '{}'", row_ + 1, t, column));
    }
    return v;
  }

  std::vector<std::optional<double>> folds(const std::string& column) const {
    const std::string& t = text(column);
    std::vector<std::optional<double>> out;
    if (t.empty()) return out;
    std::size_t start = 0;
    while (true) {
      const std::size_t end = t.find(';', start);
      out.push_back(parse_optional(std::string_view(t).substr(start, end - start), column));
      if (end == std::string::npos) break;
      start = end + 1;
    }
    return out;
  }

 private:
  std::optional<double> parse_optional(std::string_view t, const std::string& column) const {
    if (t.empty()) return std::nullopt;
    const auto v = parse_double(t);
    if (!v) throw DataError(fmt::format("results row {}: '{}' is not a number in '{}'", row_ + 1, t, column));
    return v;
  }

  const CsvTable& csv_;
  std::size_t row_;
};

}  // namespace

ResultTable parse_results(const CsvTable& csv) {
  for (const std::string& col : result_header()) {
    if (!csv.column(col)) throw DataError(fmt::format("results: missing column '{}'", col));
  }
  ResultTable table;
  table.reserve(csv.rows.size());
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const RowReader in(csv, r);
    ResultRow row;
    row.cell_id = in.text("cell_id");
    row.base = in.text("base");
    row.params = in.text("params");
    row.bm = in.text("bm");
    row.tau = in.real("tau");
    for (MetricId id : kAllMetrics) {
      const auto i = index_of(id);
      row.mean[i] = in.optional_real(metric_column(id, "mean"));
      row.std[i] = in.optional_real(metric_column(id, "std"));
      row.undefined[i] = in.count(metric_column(id, "undef"));
      row.folds[i] = in.folds(metric_column(id, "folds"));
    }
    row.cost = in.optional_real("cost");
    row.status = in.text("status");
    if (row.status != "ok" && row.status != "failed") {
      throw DataError(fmt::format("results row {}: unknown status '{}'", r + 1, row.status));
    }
    table.push_back(std::move(row));
  }
  return table;
}

ResultTable read_results(const std::filesystem::path& path) { return parse_results(read_csv(path)); }

}  // namespace fairgrid
