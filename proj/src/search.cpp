#include "fairgrid/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fairgrid/error.hpp"
#include "fairgrid/random.hpp"

namespace fairgrid {

void CostCriterion::validate() const {
  if (!is_accuracy_metric(acc_metric)) {
    throw ConfigError(fmt::format("criterion.acc_metric: {} is not an accuracy metric", to_string(acc_metric)));
  }
  if (is_accuracy_metric(fair_metric)) {
    throw ConfigError(fmt::format("criterion.fair_metric: {} is not a fairness metric", to_string(fair_metric)));
  }
  if (!(alpha >= 0.0 && std::isfinite(alpha))) throw ConfigError("criterion.alpha must be a finite value >= 0");
  if (!(beta >= 0.0 && std::isfinite(beta))) throw ConfigError("criterion.beta must be a finite value >= 0");
  if (!(alpha + beta > 0.0)) throw ConfigError("criterion: alpha + beta must be > 0");
}

std::optional<double> total_cost(std::optional<double> acc_value, std::optional<double> fair_value,
                                 const CostCriterion& criterion) {
  const auto fair = fairness_cost(fair_value, criterion.fair_metric);
  if (!acc_value || !fair) return std::nullopt;
  return criterion.alpha * (1.0 - *acc_value) + criterion.beta * *fair;
}

void GridConfig::validate() const {
  if (bases.empty()) throw ConfigError("grid.bases must not be empty");
  for (const BaseGrid& b : bases) {
    if (b.param_maps.empty()) throw ConfigError(fmt::format("grid.bases: {} has no parameter maps", to_string(b.kind)));
    if (!is_implemented(b.kind)) continue;
    for (const ParamMap& p : b.param_maps) EstimatorSpec{b.kind, p, 0}.validate();
  }
  if (thresholds.empty()) throw ConfigError("grid.thresholds must not be empty");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double t = thresholds[i];
    if (!(t > 0.0 && t < 1.0)) throw ConfigError(fmt::format("grid.thresholds: {} outside (0, 1)", t));
    if (i > 0 && !(t > thresholds[i - 1])) throw ConfigError("grid.thresholds must be strictly increasing");
  }
  if (mitigations.empty()) throw ConfigError("grid.mitigations must not be empty");
  std::set<MitigationId> seen;
  for (MitigationId m : mitigations) {
    if (!seen.insert(m).second) throw ConfigError(fmt::format("grid.mitigations: {} listed twice", to_string(m)));
  }
  if (cv_k < 2) throw ConfigError(fmt::format("cv.k must be >= 2, got {}", cv_k));
  criterion.validate();
  mitigation.egr.validate();
  if (mitigation.roc_bands.empty()) throw ConfigError("ROC band grid must not be empty");
  for (double b : mitigation.roc_bands) {
    if (!(b >= 0.0 && b < 0.5)) throw ConfigError(fmt::format("ROC band {} outside [0, 0.5)", b));
  }
  if (mitigation.cns_neighbors < 1) throw ConfigError("consistency neighbour count must be >= 1");
}

std::string GridCell::base_name() const { return base ? std::string(to_string(*base)) : "-"; }

std::string GridCell::fit_key() const {
  return fmt::format("{}|{}|{}", base_name(), canonical_params(params), to_string(mitigation));
}

std::string make_cell_id(std::optional<BaseKind> base, const ParamMap& params, MitigationId mitigation, double tau) {
  const std::string text = fmt::format("base={}\nparams={}\nbm={}\ntau={}", base ? to_string(*base) : "-",
                                       canonical_params(params), to_string(mitigation), format_double(tau));
  return fmt::format("{:016x}", fnv1a(text));
}

namespace {

std::optional<std::string> incompatibility(BaseKind base, MitigationId bm) {
  if (base != BaseKind::TABTRANS) return std::nullopt;
  if (bm == MitigationId::EGR) return "TABTRANS cannot train on the per-row costs EGR produces";
  if (bm == MitigationId::LFR_PRE) return "TABTRANS needs the categorical columns LFR_PRE replaces";
  return std::nullopt;
}

}  // namespace

std::vector<GridCell> enumerate_grid(const GridConfig& cfg, std::vector<std::string>* skipped) {
  cfg.validate();
  std::vector<GridCell> cells;
  std::set<std::string> reasons;
  for (const BaseGrid& b : cfg.bases) {
    for (const ParamMap& params : b.param_maps) {
      for (MitigationId bm : cfg.mitigations) {
        if (is_base_invariant(bm)) continue;
        if (auto why = incompatibility(b.kind, bm)) {
          const std::string line = fmt::format("{} x {} skipped: {}", to_string(b.kind), to_string(bm), *why);
          if (reasons.insert(line).second) {
            spdlog::info("{}", line);
            if (skipped != nullptr) skipped->push_back(line);
          }
          continue;
        }
        for (double tau : cfg.thresholds) {
          cells.push_back({make_cell_id(b.kind, params, bm, tau), b.kind, params, bm, tau});
        }
      }
    }
  }
  for (MitigationId bm : cfg.mitigations) {
    if (!is_base_invariant(bm)) continue;
    for (double tau : cfg.thresholds) cells.push_back({make_cell_id(std::nullopt, {}, bm, tau), std::nullopt, {}, bm, tau});
  }
  return cells;
}

std::string_view to_string(CellStatus status) { return status == CellStatus::ok ? "ok" : "failed"; }

namespace {

struct FoldData {
  Eigen::MatrixXd train_X;
  Eigen::MatrixXd test_X;
  std::vector<int> train_y, train_groups, test_y, test_groups;
  std::optional<NeighborLists> test_neighbors;
};

FoldData prepare_fold(const Dataset& data, const FoldPlan& plan, int fold, std::size_t cns_neighbors) {
  const auto train = plan.train_rows(fold);
  const auto test = plan.test_rows(fold);
  const Encoder enc = Encoder::fit(data, train);
  FoldData f;
  f.train_X = enc.transform(data, train).values;
  f.test_X = enc.transform(data, test).values;
  for (std::size_t r : train) {
    f.train_y.push_back(data.labels()[r]);
    f.train_groups.push_back(data.groups()[r]);
  }
  for (std::size_t r : test) {
    f.test_y.push_back(data.labels()[r]);
    f.test_groups.push_back(data.groups()[r]);
  }
  if (test.size() > cns_neighbors) f.test_neighbors = nearest_neighbors(f.test_X, cns_neighbors);
  return f;
}

std::uint64_t fold_seed(std::uint64_t run_seed, const GridCell& cell, int fold) {
  return mix_seed({run_seed, fnv1a(cell.fit_key()), static_cast<std::uint64_t>(fold)});
}

MitigationOptions pipeline_options(const EvaluationOptions& options) {
  MitigationOptions m = options.mitigation;
  m.target_metric = options.criterion.fair_metric;
  return m;
}

struct FoldOutcome {
  std::optional<std::vector<MetricReport>> reports;  // one per tau
  std::string error;
};

// Fits the cell group's pipeline once and scores every threshold.
FoldOutcome evaluate_fold(const GridCell& cell, std::span<const double> taus, const FoldData& f,
                          std::uint64_t seed, const MitigationOptions& options) {
  if (!cell.base) {
    throw NotImplementedError(fmt::format("mitigation {} is not implemented", to_string(cell.mitigation)));
  }
  MitigationContext ctx;
  ctx.train_X = &f.train_X;
  ctx.train_y = f.train_y;
  ctx.train_groups = f.train_groups;
  ctx.test_X = &f.test_X;
  ctx.test_groups = f.test_groups;
  ctx.base = EstimatorSpec{*cell.base, cell.params, 0};
  ctx.options = options;
  ctx.seed = seed;
  FoldOutcome out;
  try {
    const PipelineOutcome outcome = apply_mitigation(cell.mitigation, ctx);
    std::vector<MetricReport> reports;
    reports.reserve(taus.size());
    for (double tau : taus) {
      const std::vector<int> predicted = outcome.predict(tau);
      PredictionSet set{f.test_y, f.test_groups, outcome.test_scores(), predicted,
                        f.test_neighbors ? &*f.test_neighbors : nullptr, options.gei_alpha};
      reports.push_back(evaluate_predictions(set));
    }
    out.reports = std::move(reports);
  } catch (const FitError& e) {
    out.error = e.what();
  } catch (const CapabilityError& e) {
    out.error = e.what();
  } catch (const DataError& e) {
    out.error = e.what();
  }
  return out;
}

MetricSummary summarize_metric(const std::vector<std::optional<double>>& folds) {
  MetricSummary s;
  s.folds = folds;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : folds) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  s.undefined = folds.size() - n;
  if (n == 0) return s;
  const double mean = sum / static_cast<double>(n);
  s.mean = mean;
  if (n >= 2) {
    double ss = 0.0;
    for (const auto& v : folds) {
      if (v) ss += (*v - mean) * (*v - mean);
    }
    s.std = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return s;
}

unsigned resolve_jobs(unsigned jobs, std::size_t items) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(jobs, items)));
}

// Runs task(i) for i in [0, count) on `jobs` threads. The exception of the
// lowest failing index is rethrown so errors do not depend on scheduling.
template <class Task>
void parallel_for(std::size_t count, unsigned jobs, Task&& task) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = resolve_jobs(jobs, count);
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n);
    for (unsigned t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void check_runnable(const GridConfig& cfg) {
  for (const BaseGrid& b : cfg.bases) {
    if (!is_implemented(b.kind)) {
      throw NotImplementedError(fmt::format("base estimator {} is not implemented", to_string(b.kind)));
    }
  }
  for (MitigationId m : cfg.mitigations) {
    if (!is_implemented(m)) throw NotImplementedError(fmt::format("mitigation {} is not implemented", to_string(m)));
  }
}

}  // namespace

void summarize(EvaluationRecord& record, const CostCriterion& criterion) {
  const std::size_t k = record.folds.size();
  record.failed_folds = 0;
  for (const auto& f : record.folds) record.failed_folds += f ? 0 : 1;
  for (MetricId id : kAllMetrics) {
    std::vector<std::optional<double>> values(k);
    for (std::size_t f = 0; f < k; ++f) {
      if (record.folds[f]) values[f] = (*record.folds[f])[id];
    }
    record.summary[index_of(id)] = summarize_metric(values);
  }
  // Keep the normalized MCC an exact affine image of the MCC aggregate.
  MetricSummary& norm = record.summary[index_of(MetricId::NORM_MCC)];
  const MetricSummary& mcc = record.summary[index_of(MetricId::MCC)];
  norm.mean = mcc.mean ? std::optional(0.5 * (*mcc.mean + 1.0)) : std::nullopt;
  norm.std = mcc.std ? std::optional(0.5 * *mcc.std) : std::nullopt;

  record.status = record.failed_folds * 2 > k ? CellStatus::failed : CellStatus::ok;
  record.cost = record.status == CellStatus::ok
                    ? total_cost(record[criterion.acc_metric].mean, record[criterion.fair_metric].mean, criterion)
                    : std::nullopt;
}

EvaluationRecord evaluate_cell(const GridCell& cell, const Dataset& data, const FoldPlan& plan, std::uint64_t seed,
                               const EvaluationOptions& options) {
  options.criterion.validate();
  if (plan.assignment.size() != data.size()) throw ContractError("evaluate_cell: fold plan does not cover the dataset");
  const MitigationOptions mopts = pipeline_options(options);
  EvaluationRecord record;
  record.cell = cell;
  record.folds.resize(static_cast<std::size_t>(plan.k));
  const double taus[] = {cell.tau};
  for (int f = 0; f < plan.k; ++f) {
    const FoldData fold = prepare_fold(data, plan, f, mopts.cns_neighbors);
    FoldOutcome out = evaluate_fold(cell, taus, fold, fold_seed(seed, cell, f), mopts);
    if (out.reports) {
      record.folds[static_cast<std::size_t>(f)] = out.reports->front();
    } else if (record.note.empty()) {
      record.note = fmt::format("fold {}: {}", f, out.error);
    }
  }
  summarize(record, options.criterion);
  return record;
}

std::size_t select_best(const std::vector<EvaluationRecord>& records, const CostCriterion& criterion) {
  std::optional<std::size_t> best;
  auto better = [&](const EvaluationRecord& a, const EvaluationRecord& b) {
    if (*a.cost != *b.cost) return *a.cost < *b.cost;
    const double acc_a = a[criterion.acc_metric].mean.value_or(-INFINITY);
    const double acc_b = b[criterion.acc_metric].mean.value_or(-INFINITY);
    if (acc_a != acc_b) return acc_a > acc_b;
    const double fa = fairness_cost(a[criterion.fair_metric].mean, criterion.fair_metric).value_or(INFINITY);
    const double fb = fairness_cost(b[criterion.fair_metric].mean, criterion.fair_metric).value_or(INFINITY);
    if (fa != fb) return fa < fb;
    return a.cell.cell_id < b.cell.cell_id;
  };
  std::size_t failed = 0;
  std::map<std::string, std::size_t> undefined;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const EvaluationRecord& r = records[i];
    if (r.status == CellStatus::failed) {
      ++failed;
      continue;
    }
    if (!r.cost) {
      if (!r[criterion.acc_metric].mean) ++undefined[std::string(to_string(criterion.acc_metric))];
      if (!r[criterion.fair_metric].mean) ++undefined[std::string(to_string(criterion.fair_metric))];
      continue;
    }
    if (!best || better(r, records[*best])) best = i;
  }
  if (!best) {
    std::string msg = fmt::format("no cell has a defined cost ({} cells, {} failed", records.size(), failed);
    for (const auto& [metric, count] : undefined) msg += fmt::format(", {} with undefined {} mean", count, metric);
    throw RunError(msg + ")");
  }
  return *best;
}

nlohmann::json refit_best(const GridCell& cell, const Dataset& data, const GridConfig& cfg,
                          const EvaluationRecord* record) {
  if (!cell.base) throw NotImplementedError(fmt::format("mitigation {} is not implemented", to_string(cell.mitigation)));
  const Encoder enc = Encoder::fit(data);
  const Eigen::MatrixXd X = enc.transform(data).values;
  std::vector<int> y(data.labels().begin(), data.labels().end());
  std::vector<int> groups(data.groups().begin(), data.groups().end());
  MitigationContext ctx;
  ctx.train_X = &X;
  ctx.train_y = y;
  ctx.train_groups = groups;
  ctx.test_X = &X;
  ctx.test_groups = groups;
  ctx.base = EstimatorSpec{*cell.base, cell.params, 0};
  ctx.options = pipeline_options({cfg.criterion, cfg.mitigation});
  ctx.seed = fold_seed(cfg.seed, cell, -1);
  const PipelineOutcome outcome = apply_mitigation(cell.mitigation, ctx);
  const double taus[] = {cell.tau};

  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["fairgrid_version"] = FAIRGRID_VERSION;
  j["cell"] = {{"cell_id", cell.cell_id},
               {"base", cell.base_name()},
               {"params", params_to_json(cell.params)},
               {"bm", to_string(cell.mitigation)},
               {"tau", cell.tau}};
  j["criterion"] = {{"acc_metric", to_string(cfg.criterion.acc_metric)},
                    {"fair_metric", to_string(cfg.criterion.fair_metric)},
                    {"alpha", cfg.criterion.alpha},
                    {"beta", cfg.criterion.beta}};
  j["data"] = {{"label", data.label_name()}, {"protected_attribute", data.protected_name()}, {"rows", data.size()}};
  j["encoder"] = enc.to_json();
  j["pipeline"] = outcome.to_json(taus);
  if (record != nullptr) {
    nlohmann::json means = nlohmann::json::object();
    for (MetricId id : kAllMetrics) {
      const auto& m = (*record)[id].mean;
      means[std::string(to_string(id))] = m ? nlohmann::json(*m) : nlohmann::json();
    }
    j["cross_validation"] = {{"k", cfg.cv_k},
                             {"cost", record->cost ? nlohmann::json(*record->cost) : nlohmann::json()},
                             {"means", means}};
  }
  return j;
}

RunResult run(const GridConfig& cfg, const Dataset& data, const RunOptions& options) {
  cfg.validate();
  check_runnable(cfg);
  const FoldPlan plan = stratified_kfold(data, cfg.cv_k, cfg.seed);

  RunResult result;
  const std::vector<GridCell> cells = enumerate_grid(cfg, &result.skipped);

  // Cells sharing a fit key differ only in tau.
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::string, std::size_t> group_of;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto [it, fresh] = group_of.emplace(cells[i].fit_key(), groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }

  const EvaluationOptions eval{cfg.criterion, cfg.mitigation};
  const MitigationOptions mopts = pipeline_options(eval);
  const auto k = static_cast<std::size_t>(plan.k);

  std::vector<FoldData> folds(k);
  parallel_for(k, options.jobs, [&](std::size_t f) {
    folds[f] = prepare_fold(data, plan, static_cast<int>(f), mopts.cns_neighbors);
  });

  std::vector<FoldOutcome> slots(groups.size() * k);
  parallel_for(slots.size(), options.jobs, [&](std::size_t item) {
    const auto& members = groups[item / k];
    const auto f = static_cast<int>(item % k);
    std::vector<double> taus;
    for (std::size_t c : members) taus.push_back(cells[c].tau);
    const GridCell& head = cells[members.front()];
    slots[item] = evaluate_fold(head, taus, folds[static_cast<std::size_t>(f)], fold_seed(cfg.seed, head, f), mopts);
  });

  result.records.resize(cells.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t t = 0; t < groups[g].size(); ++t) {
      EvaluationRecord& record = result.records[groups[g][t]];
      record.cell = cells[groups[g][t]];
      record.folds.resize(k);
      for (std::size_t f = 0; f < k; ++f) {
        const FoldOutcome& out = slots[g * k + f];
        if (out.reports) {
          record.folds[f] = (*out.reports)[t];
        } else if (record.note.empty()) {
          record.note = fmt::format("fold {}: {}", f, out.error);
        }
      }
      summarize(record, cfg.criterion);
    }
  }

  try {
    const std::size_t best = select_best(result.records, cfg.criterion);
    result.best = best;
    result.best_model = refit_best(result.records[best].cell, data, cfg, &result.records[best]);
  } catch (const RunError& e) {
    result.best_error = e.what();
  }
  spdlog::info("evaluated {} cells over {} folds ({} fitted pipelines per fold)", cells.size(), k, groups.size());
  return result;
}

}  // namespace fairgrid
