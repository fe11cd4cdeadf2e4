#include "fairgrid/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "fairgrid/error.hpp"

namespace fairgrid {
namespace {

// Twice the mid-rank, which is always an integer.
std::vector<long long> doubled_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<long long> out(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = static_cast<long long>(i + j + 2);
    i = j + 1;
  }
  return out;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// P(|S - center| >= observed) over all size-m subsets of the doubled ranks.
double exact_two_sided(const std::vector<long long>& ranks, std::size_t m, long long observed_sum) {
  const auto n = ranks.size();
  long long max_sum = 0;
  {
    std::vector<long long> sorted = ranks;
    std::sort(sorted.rbegin(), sorted.rend());
    for (std::size_t i = 0; i < m; ++i) max_sum += sorted[i];
  }
  const auto width = static_cast<std::size_t>(max_sum + 1);
  // ways[j * width + s]: subsets of size j with doubled rank sum s.
  std::vector<double> ways((m + 1) * width, 0.0);
  ways[0] = 1.0;
  for (std::size_t item = 0; item < n; ++item) {
    const auto r = static_cast<std::size_t>(ranks[item]);
    for (std::size_t j = std::min(m, item + 1); j >= 1; --j) {
      double* dst = &ways[j * width];
      const double* src = &ways[(j - 1) * width];
      for (std::size_t s = width; s-- > r;) dst[s] += src[s - r];
    }
  }
  const long long center = static_cast<long long>(m) * static_cast<long long>(n + 1);
  const long long observed = std::llabs(observed_sum - center);
  double hits = 0.0, total = 0.0;
  for (std::size_t s = 0; s < width; ++s) {
    const double w = ways[m * width + s];
    if (w == 0.0) continue;
    total += w;
    if (std::llabs(static_cast<long long>(s) - center) >= observed) hits += w;
  }
  return hits / total;
}

}  // namespace

std::vector<double> midranks(std::span<const double> values) {
  const auto doubled = doubled_ranks(values);
  std::vector<double> out(doubled.size());
  for (std::size_t i = 0; i < doubled.size(); ++i) out[i] = 0.5 * static_cast<double>(doubled[i]);
  return out;
}

SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractError("spearman: length mismatch");
  if (x.size() < 3) throw ContractError("spearman: needs at least 3 pairs");
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  SpearmanResult out;
  if (sxx == 0.0 || syy == 0.0) return out;
  const double rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  out.rho = rho;
  if (std::abs(rho) == 1.0) {
    out.p = 0.0;
    return out;
  }
  const double df = static_cast<double>(x.size() - 2);
  const double t = rho * std::sqrt(df / (1.0 - rho * rho));
  const boost::math::students_t dist(df);
  out.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  return out;
}

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ContractError("mann_whitney_u: both samples must be nonempty");
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  const auto ranks = doubled_ranks(all);
  const std::size_t na = a.size(), nb = b.size(), n = all.size();
  long long sum_a = 0;
  for (std::size_t i = 0; i < na; ++i) sum_a += ranks[i];

  MannWhitneyResult out;
  out.u = 0.5 * static_cast<double>(sum_a) - 0.5 * static_cast<double>(na * (na + 1));
  if (std::all_of(all.begin(), all.end(), [&](double v) { return v == all.front(); })) {
    out.p = 1.0;
    out.exact = std::min(na, nb) < kExactMannWhitneyLimit;
    return out;
  }
  if (std::min(na, nb) < kExactMannWhitneyLimit) {
    out.exact = true;
    if (na <= nb) {
      out.p = exact_two_sided(ranks, na, sum_a);
    } else {
      const long long total = static_cast<long long>(n * (n + 1));
      // Complement subset: the same deviation magnitude, a smaller DP.
      std::vector<long long> swapped(ranks.begin() + static_cast<std::ptrdiff_t>(na), ranks.end());
      swapped.insert(swapped.end(), ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(na));
      out.p = exact_two_sided(swapped, nb, total - sum_a);
    }
    return out;
  }
  // Tie correction over the combined sample.
  std::map<long long, std::size_t> ties;
  for (long long r : ranks) ++ties[r];
  double tie_term = 0.0;
  for (const auto& [r, t] : ties) {
    const auto tt = static_cast<double>(t);
    tie_term += tt * tt * tt - tt;
  }
  const double dn = static_cast<double>(n);
  const double var = static_cast<double>(na) * static_cast<double>(nb) / 12.0 *
                     ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  if (!(var > 0.0)) {
    out.p = 1.0;
    return out;
  }
  const double mu = 0.5 * static_cast<double>(na) * static_cast<double>(nb);
  const double z = std::max(0.0, std::abs(out.u - mu) - 0.5) / std::sqrt(var);
  out.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return out;
}

std::string_view to_string(EffectBucket bucket) {
  switch (bucket) {
    case EffectBucket::small: return "small";
    case EffectBucket::medium: return "medium";
    case EffectBucket::large: return "large";
  }
  return "?";
}

EffectBucket effect_bucket(double d) {
  const double m = std::abs(d);
  if (m < 0.5) return EffectBucket::small;
  if (m < 0.8) return EffectBucket::medium;
  return EffectBucket::large;
}

CohensD cohens_d(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw ContractError("cohens_d: each sample needs at least 2 values");
  const double ma = mean_of(a), mb = mean_of(b);
  double ssa = 0.0, ssb = 0.0;
  for (double v : a) ssa += (v - ma) * (v - ma);
  for (double v : b) ssb += (v - mb) * (v - mb);
  const double pooled = (ssa + ssb) / static_cast<double>(a.size() + b.size() - 2);
  CohensD out;
  if (!(pooled > 0.0)) return out;
  out.d = (ma - mb) / std::sqrt(pooled);
  out.bucket = effect_bucket(*out.d);
  return out;
}

std::string significance_stars(std::optional<double> p) {
  if (!p) return "";
  if (*p < 0.001) return "***";
  if (*p < 0.01) return "**";
  if (*p < 0.05) return "*";
  return "";
}

// ---------------------------------------------------------------------------

std::string_view to_string(Direction direction) {
  switch (direction) {
    case Direction::decrease: return "significant_decrease";
    case Direction::increase: return "significant_increase";
    case Direction::insignificant: return "insignificant";
  }
  return "?";
}

std::string_view to_string(ScenarioGrouping grouping) {
  switch (grouping) {
    case ScenarioGrouping::bm: return "bm";
    case ScenarioGrouping::bm_base: return "bm_base";
    case ScenarioGrouping::cell: return "cell";
  }
  return "?";
}

ScenarioGrouping parse_scenario_grouping(std::string_view text) {
  if (text == "bm") return ScenarioGrouping::bm;
  if (text == "bm_base") return ScenarioGrouping::bm_base;
  if (text == "cell") return ScenarioGrouping::cell;
  throw ConfigError(fmt::format("unknown scenario grouping '{}'", text));
}

namespace {

std::optional<double> comparable(const std::optional<double>& v, MetricId id) {
  if (!v) return std::nullopt;
  return is_accuracy_metric(id) ? v : fairness_cost(v, id);
}

struct Pool {
  std::string bm, base;
  std::vector<std::size_t> mitigated, baseline;  // row indices, pairwise aligned
};

}  // namespace

EffectAnalysis bm_effect_analysis(const ResultTable& table, const EffectOptions& options) {
  if (!(options.significance > 0.0 && options.significance < 1.0)) {
    throw ConfigError("significance level must lie in (0, 1)");
  }
  EffectAnalysis out;
  std::map<std::tuple<std::string, std::string, double>, std::size_t> baseline;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].bm == "NONE") baseline.emplace(std::make_tuple(table[i].base, table[i].params, table[i].tau), i);
  }

  // Insertion-ordered pools keyed by the scenario key.
  std::vector<Pool> pools;
  std::map<std::string, std::size_t> pool_of;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const ResultRow& row = table[i];
    if (row.bm == "NONE") continue;
    const auto it = baseline.find(std::make_tuple(row.base, row.params, row.tau));
    if (it == baseline.end()) {
      out.skipped.push_back(fmt::format("{}: no NONE row for base={} params={} tau={}", row.cell_id, row.base,
                                        row.params, format_double(row.tau)));
      continue;
    }
    std::string key, base;
    switch (options.grouping) {
      case ScenarioGrouping::bm: key = row.bm; break;
      case ScenarioGrouping::bm_base:
        key = row.bm + "|" + row.base;
        base = row.base;
        break;
      case ScenarioGrouping::cell:
        key = fmt::format("{}|{}|{}|{}", row.bm, row.base, row.params, format_double(row.tau));
        base = row.base;
        break;
    }
    auto [pit, fresh] = pool_of.emplace(key, pools.size());
    if (fresh) pools.push_back({row.bm, base, {}, {}});
    pools[pit->second].mitigated.push_back(i);
    pools[pit->second].baseline.push_back(it->second);
  }

  for (const auto& [key, index] : pool_of) {
    const Pool& pool = pools[index];
    for (MetricId id : kAllMetrics) {
      std::vector<double> mit, base;
      for (std::size_t r : pool.mitigated) {
        for (const auto& v : table[r].folds_of(id)) {
          if (auto c = comparable(v, id)) mit.push_back(*c);
        }
      }
      for (std::size_t r : pool.baseline) {
        for (const auto& v : table[r].folds_of(id)) {
          if (auto c = comparable(v, id)) base.push_back(*c);
        }
      }
      if (mit.empty() || base.empty()) {
        out.skipped.push_back(fmt::format("{} {}: no defined fold values", key, to_string(id)));
        continue;
      }
      EffectScenario s;
      s.key = key;
      s.bm = pool.bm;
      s.base = pool.base;
      s.metric = id;
      s.test = mann_whitney_u(mit, base);
      if (mit.size() >= 2 && base.size() >= 2) s.effect = cohens_d(mit, base);
      s.n_mitigated = mit.size();
      s.n_baseline = base.size();
      s.median_mitigated = median_of(mit);
      s.median_baseline = median_of(base);
      if (s.test.p < options.significance) {
        if (s.median_mitigated != s.median_baseline) {
          s.direction = s.median_mitigated < s.median_baseline ? Direction::decrease : Direction::increase;
        } else {
          const double centre = 0.5 * static_cast<double>(s.n_mitigated) * static_cast<double>(s.n_baseline);
          s.direction = s.test.u < centre ? Direction::decrease
                                          : (s.test.u > centre ? Direction::increase : Direction::insignificant);
        }
      }
      out.scenarios.push_back(std::move(s));
    }
  }

  std::map<std::pair<std::string, std::size_t>, EffectSummary> summary;
  for (const EffectScenario& s : out.scenarios) {
    for (const std::string& bm : {s.bm, std::string("ALL")}) {
      EffectSummary& e = summary[{bm, index_of(s.metric)}];
      e.bm = bm;
      e.metric = s.metric;
      ++e.scenarios;
      e.decreases += s.direction == Direction::decrease;
      e.increases += s.direction == Direction::increase;
    }
  }
  for (auto& [key, e] : summary) out.summary.push_back(e);
  return out;
}

CsvTable effects_csv(const EffectAnalysis& analysis) {
  CsvTable csv;
  csv.header = {"scenario", "bm",  "base", "metric",  "direction",  "p",          "d",
                "bucket",   "u",   "exact", "n_mitigated", "n_baseline", "median_mitigated", "median_baseline"};
  for (const EffectScenario& s : analysis.scenarios) {
    csv.rows.push_back({s.key, s.bm, s.base, std::string(to_string(s.metric)), std::string(to_string(s.direction)),
                        format_double(s.test.p), s.effect.d ? format_double(*s.effect.d) : "",
                        s.effect.bucket ? std::string(to_string(*s.effect.bucket)) : "", format_double(s.test.u),
                        s.test.exact ? "1" : "0", std::to_string(s.n_mitigated), std::to_string(s.n_baseline),
                        format_double(s.median_mitigated), format_double(s.median_baseline)});
  }
  return csv;
}

CsvTable effects_summary_csv(const EffectAnalysis& analysis) {
  CsvTable csv;
  csv.header = {"bm", "metric", "scenarios", "significant_decrease", "significant_increase", "decrease_share"};
  for (const EffectSummary& e : analysis.summary) {
    csv.rows.push_back({e.bm, std::string(to_string(e.metric)), std::to_string(e.scenarios),
                        std::to_string(e.decreases), std::to_string(e.increases), format_double(e.decrease_share())});
  }
  return csv;
}

// ---------------------------------------------------------------------------

MetricFamily parse_metric_family(std::string_view text) {
  if (text == "acc" || text == "accuracy") return MetricFamily::accuracy;
  if (text == "fair" || text == "fairness") return MetricFamily::fairness;
  throw ConfigError(fmt::format("unknown metric family '{}'", text));
}

CorrelationMatrix correlation_report(const ResultTable& table, MetricFamily family) {
  if (table.size() < 3) {
    throw DataError(fmt::format("correlation report needs at least 3 result rows, got {}", table.size()));
  }
  CorrelationMatrix m;
  if (family == MetricFamily::accuracy) {
    m.metrics.assign(kAccuracyMetrics.begin(), kAccuracyMetrics.end());
  } else {
    m.metrics.assign(kFairnessMetrics.begin(), kFairnessMetrics.end());
  }
  const std::size_t k = m.metrics.size();
  m.rho.assign(k, std::vector<std::optional<double>>(k));
  m.p.assign(k, std::vector<std::optional<double>>(k));
  m.stars.assign(k, std::vector<std::string>(k));
  m.n.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      std::vector<double> x, y;
      for (const ResultRow& row : table) {
        const auto& a = row.mean_of(m.metrics[i]);
        const auto& b = row.mean_of(m.metrics[j]);
        if (a && b) {
          x.push_back(*a);
          y.push_back(*b);
        }
      }
      m.n[i][j] = m.n[j][i] = x.size();
      if (x.size() < 3) continue;
      const SpearmanResult r = spearman(x, y);
      m.rho[i][j] = m.rho[j][i] = r.rho;
      m.p[i][j] = m.p[j][i] = r.p;
      m.stars[i][j] = m.stars[j][i] = significance_stars(r.p);
    }
  }
  return m;
}

CsvTable correlation_csv(const CorrelationMatrix& matrix, MatrixLayer layer) {
  CsvTable csv;
  csv.header.push_back("metric");
  for (MetricId id : matrix.metrics) csv.header.emplace_back(to_string(id));
  for (std::size_t i = 0; i < matrix.metrics.size(); ++i) {
    std::vector<std::string> row = {std::string(to_string(matrix.metrics[i]))};
    for (std::size_t j = 0; j < matrix.metrics.size(); ++j) {
      switch (layer) {
        case MatrixLayer::rho: row.push_back(matrix.rho[i][j] ? format_double(*matrix.rho[i][j]) : ""); break;
        case MatrixLayer::stars: row.push_back(matrix.stars[i][j]); break;
        case MatrixLayer::p: row.push_back(matrix.p[i][j] ? format_double(*matrix.p[i][j]) : ""); break;
        case MatrixLayer::n: row.push_back(std::to_string(matrix.n[i][j])); break;
      }
    }
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

}  // namespace fairgrid
