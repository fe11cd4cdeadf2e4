#include "fairgrid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "fairgrid/error.hpp"

namespace fairgrid {
namespace {

std::optional<double> ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}

std::optional<double> difference(std::optional<double> unpriv, std::optional<double> priv) {
  if (!unpriv || !priv) return std::nullopt;
  return *unpriv - *priv;
}

}  // namespace

std::string_view to_string(MetricId id) {
  static constexpr std::array<std::string_view, kMetricCount> names = {
      "ACC", "BACC", "F1", "AUC", "MCC", "NORM_MCC", "SPD", "AOD", "EOD", "FORD", "PPVD", "CNS", "GEI", "TI"};
  return names[index_of(id)];
}

MetricId parse_metric_id(std::string_view text) {
  for (MetricId id : kAllMetrics) {
    if (to_string(id) == text) return id;
  }
  throw ConfigError(fmt::format("unknown metric id '{}'", text));
}

bool is_accuracy_metric(MetricId id) { return index_of(id) < index_of(MetricId::SPD); }

void MetricReport::merge(const MetricReport& other) {
  for (std::size_t i = 0; i < kMetricCount; ++i) {
    if (other.values_[i]) values_[i] = other.values_[i];
  }
}

GroupConfusion confusion(std::span<const int> y, std::span<const int> predicted, std::span<const int> groups,
                         std::span<const double> weights) {
  if (predicted.size() != y.size() || groups.size() != y.size() ||
      (!weights.empty() && weights.size() != y.size())) {
    throw ContractError("confusion: length mismatch");
  }
  GroupConfusion out;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    Confusion& c = groups[i] ? out.privileged : out.unprivileged;
    if (y[i]) {
      (predicted[i] ? c.tp : c.fn) += w;
    } else {
      (predicted[i] ? c.fp : c.tn) += w;
    }
  }
  out.overall = out.privileged;
  out.overall += out.unprivileged;
  return out;
}

std::optional<double> auc(std::span<const double> scores, std::span<const int> y) {
  if (scores.size() != y.size()) throw ContractError("auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Doubled mid-ranks keep the arithmetic in integers.
  long long doubled_rank_sum = 0;
  long long positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const auto doubled = static_cast<long long>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) {
      if (y[order[k]]) {
        doubled_rank_sum += doubled;
        ++positives;
      }
    }
    i = j + 1;
  }
  const long long negatives = static_cast<long long>(n) - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const long long doubled_u = doubled_rank_sum - positives * (positives + 1);
  return static_cast<double>(doubled_u) / static_cast<double>(2 * positives * negatives);
}

MetricReport accuracy_metrics(const GroupConfusion& conf, std::span<const double> scores, std::span<const int> y) {
  const Confusion& c = conf.overall;
  const double n = c.total();
  if (n <= 0.0) throw ContractError("accuracy_metrics: no instances");
  MetricReport r;
  r[MetricId::ACC] = (c.tp + c.tn) / n;
  const auto tpr = ratio(c.tp, c.tp + c.fn);
  const auto tnr = ratio(c.tn, c.tn + c.fp);
  if (tpr && tnr) r[MetricId::BACC] = 0.5 * (*tpr + *tnr);
  r[MetricId::F1] = ratio(2.0 * c.tp, 2.0 * c.tp + c.fp + c.fn);
  if (!scores.empty()) r[MetricId::AUC] = auc(scores, y);
  const double marginals = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn);
  const double mcc = marginals == 0.0 ? 0.0 : (c.tp * c.tn - c.fp * c.fn) / std::sqrt(marginals);
  r[MetricId::MCC] = std::clamp(mcc, -1.0, 1.0);
  r[MetricId::NORM_MCC] = 0.5 * (*r[MetricId::MCC] + 1.0);
  return r;
}

MetricReport group_fairness(const GroupConfusion& conf) {
  const Confusion& u = conf.unprivileged;
  const Confusion& p = conf.privileged;
  MetricReport r;
  r[MetricId::SPD] = difference(ratio(u.tp + u.fp, u.total()), ratio(p.tp + p.fp, p.total()));
  const auto eod = difference(ratio(u.tp, u.tp + u.fn), ratio(p.tp, p.tp + p.fn));
  const auto fpr_diff = difference(ratio(u.fp, u.fp + u.tn), ratio(p.fp, p.fp + p.tn));
  r[MetricId::EOD] = eod;
  if (eod && fpr_diff) r[MetricId::AOD] = 0.5 * (*fpr_diff + *eod);
  r[MetricId::FORD] = difference(ratio(u.fn, u.fn + u.tn), ratio(p.fn, p.fn + p.tn));
  r[MetricId::PPVD] = difference(ratio(u.tp, u.tp + u.fp), ratio(p.tp, p.tp + p.fp));
  return r;
}

NeighborLists nearest_neighbors(const Eigen::MatrixXd& X, std::size_t k) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (k == 0 || k >= n) {
    throw ConfigError(fmt::format("consistency: neighbour count {} must be in [1, n) with n={}", k, n));
  }
  NeighborLists out(n);
  std::vector<std::pair<double, std::size_t>> dist(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dist[m++] = {(X.row(static_cast<Eigen::Index>(i)) - X.row(static_cast<Eigen::Index>(j))).squaredNorm(), j};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    out[i].reserve(k);
    for (std::size_t q = 0; q < k; ++q) out[i].push_back(dist[q].second);
  }
  return out;
}

double consistency(const NeighborLists& neighbors, std::span<const int> predicted) {
  if (neighbors.size() != predicted.size()) throw ContractError("consistency: length mismatch");
  if (neighbors.empty()) throw ContractError("consistency: no instances");
  double total = 0.0;
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    double mean = 0.0;
    for (std::size_t j : neighbors[i]) mean += predicted[j];
    mean /= static_cast<double>(neighbors[i].size());
    total += std::abs(predicted[i] - mean);
  }
  return 1.0 - total / static_cast<double>(neighbors.size());
}

double consistency(const Eigen::MatrixXd& X, std::span<const int> predicted, std::size_t k) {
  if (static_cast<std::size_t>(X.rows()) != predicted.size()) throw ContractError("consistency: length mismatch");
  return consistency(nearest_neighbors(X, k), predicted);
}

std::optional<double> generalized_entropy(std::span<const int> y, std::span<const int> predicted, double alpha) {
  if (y.size() != predicted.size()) throw ContractError("generalized_entropy: length mismatch");
  if (y.empty()) return std::nullopt;
  const auto n = static_cast<double>(y.size());
  double mu = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) mu += predicted[i] - y[i] + 1;
  mu /= n;
  if (mu == 0.0) return std::nullopt;
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double ratio_i = (predicted[i] - y[i] + 1) / mu;
    if (alpha == 1.0) {
      if (ratio_i > 0.0) sum += ratio_i * std::log(ratio_i);
    } else if (alpha == 0.0) {
      if (ratio_i == 0.0) return std::nullopt;
      sum -= std::log(ratio_i);
    } else {
      sum += std::pow(ratio_i, alpha) - 1.0;
    }
  }
  if (alpha == 1.0 || alpha == 0.0) return sum / n;
  return sum / (n * alpha * (alpha - 1.0));
}

std::optional<double> fairness_cost(std::optional<double> value, MetricId id) {
  if (is_accuracy_metric(id)) {
    throw ContractError(fmt::format("fairness_cost: {} is not a fairness metric", to_string(id)));
  }
  if (!value) return std::nullopt;
  return id == MetricId::CNS ? std::abs(*value - 1.0) : std::abs(*value);
}

MetricReport evaluate_predictions(const PredictionSet& set) {
  const GroupConfusion conf = confusion(set.y, set.predicted, set.groups);
  MetricReport r = accuracy_metrics(conf, set.scores, set.y);
  r.merge(group_fairness(conf));
  if (set.neighbors != nullptr) r[MetricId::CNS] = consistency(*set.neighbors, set.predicted);
  r[MetricId::GEI] = generalized_entropy(set.y, set.predicted, set.gei_alpha);
  r[MetricId::TI] = generalized_entropy(set.y, set.predicted, 1.0);
  return r;
}

}  // namespace fairgrid
