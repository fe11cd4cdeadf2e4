#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace fairgrid {

enum class MetricId { ACC, BACC, F1, AUC, MCC, NORM_MCC, SPD, AOD, EOD, FORD, PPVD, CNS, GEI, TI };

inline constexpr std::size_t kMetricCount = 14;
inline constexpr std::array<MetricId, kMetricCount> kAllMetrics = {
    MetricId::ACC, MetricId::BACC, MetricId::F1,  MetricId::AUC,  MetricId::MCC,
    MetricId::NORM_MCC, MetricId::SPD, MetricId::AOD, MetricId::EOD, MetricId::FORD,
    MetricId::PPVD, MetricId::CNS, MetricId::GEI, MetricId::TI};
inline constexpr std::array<MetricId, 6> kAccuracyMetrics = {
    MetricId::ACC, MetricId::BACC, MetricId::F1, MetricId::AUC, MetricId::MCC, MetricId::NORM_MCC};
inline constexpr std::array<MetricId, 8> kFairnessMetrics = {
    MetricId::SPD, MetricId::AOD, MetricId::EOD, MetricId::FORD,
    MetricId::PPVD, MetricId::CNS, MetricId::GEI, MetricId::TI};

std::string_view to_string(MetricId id);
MetricId parse_metric_id(std::string_view text);
bool is_accuracy_metric(MetricId id);
inline std::size_t index_of(MetricId id) { return static_cast<std::size_t>(id); }

// Weighted confusion counts.
struct Confusion {
  double tp = 0.0;
  double fp = 0.0;
  double tn = 0.0;
  double fn = 0.0;

  double total() const { return tp + fp + tn + fn; }
  Confusion& operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
};

struct GroupConfusion {
  Confusion privileged;
  Confusion unprivileged;
  Confusion overall;
};

// Group 1 is privileged. `weights` may be empty (all ones).
GroupConfusion confusion(std::span<const int> y, std::span<const int> predicted,
                         std::span<const int> groups, std::span<const double> weights = {});

// One value per metric; nullopt marks an undefined value (0/0 rate, empty
// group, constant benefit...).
class MetricReport {
 public:
  const std::optional<double>& operator[](MetricId id) const { return values_[index_of(id)]; }
  std::optional<double>& operator[](MetricId id) { return values_[index_of(id)]; }

  // Copies every defined value of `other` into this report.
  void merge(const MetricReport& other);

 private:
  std::array<std::optional<double>, kMetricCount> values_{};
};

// AUC as the probability that a random positive outranks a random
// negative, ties counted one half. nullopt when a class is absent.
std::optional<double> auc(std::span<const double> scores, std::span<const int> y);

// ACC, BACC, F1, AUC, MCC, NORM_MCC. MCC is 0 when any marginal is 0.
MetricReport accuracy_metrics(const GroupConfusion& conf, std::span<const double> scores,
                              std::span<const int> y);

// SPD, AOD, EOD, FORD, PPVD as unprivileged minus privileged.
MetricReport group_fairness(const GroupConfusion& conf);

// k nearest neighbours (Euclidean, self excluded, distance ties broken by
// row index) of every row.
using NeighborLists = std::vector<std::vector<std::size_t>>;
NeighborLists nearest_neighbors(const Eigen::MatrixXd& X, std::size_t k);

double consistency(const NeighborLists& neighbors, std::span<const int> predicted);
double consistency(const Eigen::MatrixXd& X, std::span<const int> predicted, std::size_t k);

// Generalized entropy index over benefits b = yhat - y + 1. alpha = 1 is
// the Theil index. nullopt when every benefit is zero.
std::optional<double> generalized_entropy(std::span<const int> y, std::span<const int> predicted,
                                          double alpha);

// Distance of a fairness metric to its optimum (1 for CNS, 0 otherwise).
std::optional<double> fairness_cost(std::optional<double> value, MetricId id);

inline constexpr std::size_t kDefaultConsistencyNeighbors = 5;
inline constexpr double kDefaultGeiAlpha = 2.0;

// Everything needed to score one set of predictions.
struct PredictionSet {
  std::span<const int> y;
  std::span<const int> groups;
  std::span<const double> scores;
  std::span<const int> predicted;
  // Neighbour lists over the rows' features, for CNS. CNS stays undefined
  // when null.
  const NeighborLists* neighbors = nullptr;
  double gei_alpha = kDefaultGeiAlpha;
};

MetricReport evaluate_predictions(const PredictionSet& set);

}  // namespace fairgrid
