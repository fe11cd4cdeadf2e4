#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairgrid/data.hpp"
#include "fairgrid/estimators.hpp"
#include "fairgrid/metrics.hpp"
#include "fairgrid/mitigation.hpp"

namespace fairgrid {

// C = alpha * (1 - acc) + beta * fairness_cost(fair).
struct CostCriterion {
  MetricId acc_metric = MetricId::NORM_MCC;
  MetricId fair_metric = MetricId::SPD;
  double alpha = 1.0;
  double beta = 1.0;

  void validate() const;
};

// Undefined inputs propagate.
std::optional<double> total_cost(std::optional<double> acc_value, std::optional<double> fair_value,
                                 const CostCriterion& criterion);

struct BaseGrid {
  BaseKind kind = BaseKind::LR;
  std::vector<ParamMap> param_maps;
};

struct GridConfig {
  std::vector<BaseGrid> bases;
  std::vector<double> thresholds;
  std::vector<MitigationId> mitigations;
  int cv_k = 10;
  std::uint64_t seed = 0;
  CostCriterion criterion;
  // ROC band grid, CEO cost, EGR settings. The ROC target metric is taken
  // from the criterion's fairness metric.
  MitigationOptions mitigation;

  void validate() const;
};

struct GridCell {
  std::string cell_id;
  // Empty for methods that replace the base estimator.
  std::optional<BaseKind> base;
  ParamMap params;
  MitigationId mitigation = MitigationId::NONE;
  double tau = 0.5;

  std::string base_name() const;
  // Identifies the fitted pipeline shared by cells that differ only in tau.
  std::string fit_key() const;
};

// 16 hex digits of FNV-1a over the cell's canonical description.
std::string make_cell_id(std::optional<BaseKind> base, const ParamMap& params, MitigationId mitigation, double tau);

// Order: base, params, mitigation, tau. Incompatible pairs are skipped and,
// when `skipped` is given, described there.
std::vector<GridCell> enumerate_grid(const GridConfig& cfg, std::vector<std::string>* skipped = nullptr);

// Fold aggregate of one metric.
struct MetricSummary {
  std::optional<double> mean;
  std::optional<double> std;  // sample std; needs two defined folds
  std::size_t undefined = 0;  // folds without a value, failed folds included
  std::vector<std::optional<double>> folds;
};

enum class CellStatus { ok, failed };
std::string_view to_string(CellStatus status);

struct EvaluationRecord {
  GridCell cell;
  // nullopt marks a failed fold.
  std::vector<std::optional<MetricReport>> folds;
  std::array<MetricSummary, kMetricCount> summary;
  std::size_t failed_folds = 0;
  std::optional<double> cost;
  CellStatus status = CellStatus::ok;
  std::string note;

  const MetricSummary& operator[](MetricId id) const { return summary[index_of(id)]; }
};

struct EvaluationOptions {
  CostCriterion criterion;
  MitigationOptions mitigation;
};

// Fold-level FitError/DataError/CapabilityError mark the fold failed; the
// cell fails when more than half of its folds do.
EvaluationRecord evaluate_cell(const GridCell& cell, const Dataset& data, const FoldPlan& plan, std::uint64_t seed,
                               const EvaluationOptions& options = {});

// Rebuilds the summaries, status and cost from the per-fold reports.
void summarize(EvaluationRecord& record, const CostCriterion& criterion);

// Throws RunError when no record is selectable.
std::size_t select_best(const std::vector<EvaluationRecord>& records, const CostCriterion& criterion);

struct RunOptions {
  // Worker threads; 0 picks the hardware concurrency.
  unsigned jobs = 0;
};

struct RunResult {
  std::vector<EvaluationRecord> records;
  std::vector<std::string> skipped;
  std::optional<std::size_t> best;
  // Reason no cell was selectable, when best is empty.
  std::string best_error;
  // Refit of the best cell on all rows; null when best is empty.
  nlohmann::json best_model;
};

// Throws ConfigError for invalid or unimplemented grids before any cell is
// evaluated. Output is independent of the worker count.
RunResult run(const GridConfig& cfg, const Dataset& data, const RunOptions& options = {});

// Pipeline refit on every row plus the encoder it was trained with.
nlohmann::json refit_best(const GridCell& cell, const Dataset& data, const GridConfig& cfg,
                          const EvaluationRecord* record = nullptr);

}  // namespace fairgrid
