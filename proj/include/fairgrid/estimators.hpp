#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fairgrid/data.hpp"

namespace fairgrid {

// SVM and TABTRANS are registry slots only: they enumerate in grids but
// cannot be fitted.
enum class BaseKind { LR, RF, GB, GNB, SVM, TABTRANS };

std::string_view to_string(BaseKind kind);
BaseKind parse_base_kind(std::string_view text);
bool is_implemented(BaseKind kind);

using ParamValue = std::variant<std::int64_t, double, std::string>;
using ParamMap = std::map<std::string, ParamValue>;

std::string format_param(const ParamValue& value);
// "key=value;key=value" with keys in sorted order.
std::string canonical_params(const ParamMap& params);
nlohmann::json params_to_json(const ParamMap& params);
ParamMap params_from_json(const nlohmann::json& j);

struct EstimatorSpec {
  BaseKind kind = BaseKind::LR;
  ParamMap params;
  std::uint64_t seed = 0;

  // Throws ConfigError on unknown keys, wrong types or out-of-range values,
  // NotImplementedError for reserved kinds.
  void validate() const;
};

// Fitted probabilistic binary classifier. Immutable once built.
class Classifier {
 public:
  struct Info {
    std::string kind;
    ParamMap params;
    std::uint64_t seed = 0;
    double weight_total = 0.0;
    std::size_t n_features = 0;
  };

  explicit Classifier(Info info) : info_(std::move(info)) {}
  virtual ~Classifier() = default;

  const Info& info() const { return info_; }
  std::size_t n_features() const { return info_.n_features; }

  // P(y = 1 | x) per row, clamped to [0, 1]. Throws ContractError when the
  // column count differs from the training data.
  std::vector<double> predict_proba(const Eigen::MatrixXd& X) const;

  // Kind-specific learned state.
  virtual nlohmann::json learned_json() const = 0;

 protected:
  virtual std::vector<double> raw_scores(const Eigen::MatrixXd& X) const = 0;

 private:
  Info info_;
};

using FittedModel = std::shared_ptr<const Classifier>;

// Weighted fit. Preconditions: |y| = rows(X) = |w|, w >= 0, both classes
// carry positive weight, all features finite.
FittedModel fit(const EstimatorSpec& spec, const Eigen::MatrixXd& X, std::span<const int> y,
                std::span<const double> w);
FittedModel fit(const EstimatorSpec& spec, const FeatureMatrix& X, std::span<const int> y,
                std::span<const double> w);

std::vector<double> predict_proba(const Classifier& model, const FeatureMatrix& X);

// 1 iff score >= tau. tau must lie in (0, 1).
std::vector<int> apply_threshold(std::span<const double> scores, double tau);

// Degenerate model returning the same probability for every row.
FittedModel make_constant_model(double probability, std::size_t n_features);
// Uniform mixture; predict_proba is the mean of member scores.
FittedModel make_ensemble_model(std::vector<FittedModel> members, ParamMap params = {});

inline constexpr int kModelFormatVersion = 1;
nlohmann::json model_to_json(const Classifier& model);
FittedModel model_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Logistic regression internals, exposed for gradient checks.

// Objective over theta = [coefficients..., intercept]:
//   sum_i w_i * logloss_i / sum_i w_i + l2/2 * |beta|^2
// The L1 term (if any) is handled by the proximal step and is not part of
// these two functions.
double logistic_objective(const Eigen::VectorXd& theta, const Eigen::MatrixXd& X,
                          std::span<const int> y, std::span<const double> w, double l2);
Eigen::VectorXd logistic_gradient(const Eigen::VectorXd& theta, const Eigen::MatrixXd& X,
                                  std::span<const int> y, std::span<const double> w, double l2);

// Penalty strength for inverse regularization C: the penalty is scaled as
// for a 1000-row unit-weight sample, so doubling every weight leaves the
// optimum unchanged.
inline constexpr double kPenaltyReferenceRows = 1000.0;
inline double penalty_strength(double C) { return 1.0 / (C * kPenaltyReferenceRows); }

}  // namespace fairgrid
