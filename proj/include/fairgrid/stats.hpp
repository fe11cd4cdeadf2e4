#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fairgrid/csv.hpp"
#include "fairgrid/metrics.hpp"
#include "fairgrid/results.hpp"

namespace fairgrid {

// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> midranks(std::span<const double> values);

struct SpearmanResult {
  // Both empty when either input is constant.
  std::optional<double> rho;
  std::optional<double> p;
};

// Pearson correlation of mid-ranks; two-sided p from the t distribution
// with n - 2 degrees of freedom. Requires equal lengths and n >= 3.
SpearmanResult spearman(std::span<const double> x, std::span<const double> y);

struct MannWhitneyResult {
  double u = 0.0;  // U of the first sample
  double p = 1.0;  // two-sided
  bool exact = false;
};

inline constexpr std::size_t kExactMannWhitneyLimit = 8;

// Exact null distribution (ties included) when the smaller sample has fewer
// than kExactMannWhitneyLimit values, otherwise the tie-corrected normal
// approximation with continuity correction.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b);

enum class EffectBucket { small, medium, large };
std::string_view to_string(EffectBucket bucket);
EffectBucket effect_bucket(double d);

struct CohensD {
  std::optional<double> d;  // empty for zero pooled variance
  std::optional<EffectBucket> bucket;
};

// (mean(a) - mean(b)) / pooled std. Requires two values per sample.
CohensD cohens_d(std::span<const double> a, std::span<const double> b);

// "***" for p < 0.001, "**" for p < 0.01, "*" for p < 0.05.
std::string significance_stars(std::optional<double> p);

// ---------------------------------------------------------------------------

enum class Direction { decrease, increase, insignificant };
std::string_view to_string(Direction direction);

// Which mitigated cells are pooled into one scenario (always per metric).
enum class ScenarioGrouping { bm, bm_base, cell };
std::string_view to_string(ScenarioGrouping grouping);
ScenarioGrouping parse_scenario_grouping(std::string_view text);

struct EffectOptions {
  ScenarioGrouping grouping = ScenarioGrouping::bm_base;
  double significance = 0.05;
};

// Fairness metrics are compared as distance to their optimum, accuracy
// metrics as raw values, so "decrease" means less bias or less accuracy.
struct EffectScenario {
  std::string key;
  std::string bm;
  std::string base;  // empty when pooled across bases
  MetricId metric = MetricId::ACC;
  Direction direction = Direction::insignificant;
  MannWhitneyResult test;
  CohensD effect;
  std::size_t n_mitigated = 0;
  std::size_t n_baseline = 0;
  double median_mitigated = 0.0;
  double median_baseline = 0.0;
};

struct EffectSummary {
  std::string bm;  // "ALL" for the pooled row
  MetricId metric = MetricId::ACC;
  std::size_t scenarios = 0;
  std::size_t decreases = 0;
  std::size_t increases = 0;

  double decrease_share() const { return scenarios ? static_cast<double>(decreases) / scenarios : 0.0; }
};

struct EffectAnalysis {
  std::vector<EffectScenario> scenarios;
  std::vector<EffectSummary> summary;
  // Mitigated rows without a NONE counterpart, and scenarios without data.
  std::vector<std::string> skipped;
};

// Pairs each mitigated row with the NONE row of the same (base, params, tau)
// and tests the pooled per-fold values.
EffectAnalysis bm_effect_analysis(const ResultTable& table, const EffectOptions& options = {});

CsvTable effects_csv(const EffectAnalysis& analysis);
CsvTable effects_summary_csv(const EffectAnalysis& analysis);

// ---------------------------------------------------------------------------

enum class MetricFamily { accuracy, fairness };
MetricFamily parse_metric_family(std::string_view text);

struct CorrelationMatrix {
  std::vector<MetricId> metrics;
  std::vector<std::vector<std::optional<double>>> rho;
  std::vector<std::vector<std::optional<double>>> p;
  std::vector<std::vector<std::string>> stars;
  // Pairwise-complete row counts.
  std::vector<std::vector<std::size_t>> n;
};

// Spearman over the fold-mean columns of the family. Throws DataError for
// tables with fewer than three rows.
CorrelationMatrix correlation_report(const ResultTable& table, MetricFamily family);

enum class MatrixLayer { rho, stars, p, n };
CsvTable correlation_csv(const CorrelationMatrix& matrix, MatrixLayer layer);

}  // namespace fairgrid
