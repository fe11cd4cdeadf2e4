#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fairgrid/estimators.hpp"
#include "fairgrid/metrics.hpp"
#include "fairgrid/random.hpp"

namespace fairgrid {

// LFR_PRE, LFR_IN and AD are reserved: they parse and enumerate but are
// rejected with NotImplementedError when a pipeline is built.
enum class MitigationId { NONE, RW, ROC, CEO, EGR, RW_ROC, RW_CEO, LFR_PRE, LFR_IN, AD };
enum class Stage { none, pre, in, post, mixed };

std::string_view to_string(MitigationId id);
std::string_view to_string(Stage stage);
MitigationId parse_mitigation_id(std::string_view text);
Stage stage_of(MitigationId id);
bool is_implemented(MitigationId id);
// Methods that replace the base estimator entirely.
bool is_base_invariant(MitigationId id);

enum class PostProcessor { none, roc, ceo };

// Stage-ordered pipeline: pre -> in -> post.
struct MitigationSteps {
  bool reweigh = false;
  bool egr = false;
  PostProcessor post = PostProcessor::none;
};

// Merges the stages of the given methods. Throws ConfigError when two
// methods claim the same stage, NotImplementedError for reserved ids.
MitigationSteps compose(std::span<const MitigationId> ids);
MitigationSteps expand(MitigationId id);

// ---------------------------------------------------------------------------
// Reweighing

struct ReweighResult {
  std::vector<double> weights;
  // Indexed [group * 2 + label].
  std::array<double, 4> cell_weight{};
  std::array<bool, 4> empty_cell{};
};

// w(s, y) = P(s) P(y) / P(s, y). Empty cells get weight 0 and are flagged.
ReweighResult reweigh(std::span<const int> y, std::span<const int> groups);

// ---------------------------------------------------------------------------
// Reject option classification

// Inside |score - tau| <= band (band > 0) unprivileged rows get 1 and
// privileged rows get 0; elsewhere plain thresholding.
std::vector<int> roc_adjust(std::span<const double> scores, std::span<const int> groups, double tau, double band);

// Predictions used to tune a post-processor.
struct ValidationSet {
  std::span<const double> scores;
  std::span<const int> y;
  std::span<const int> groups;
  const NeighborLists* neighbors = nullptr;  // only needed for a CNS target
  double gei_alpha = kDefaultGeiAlpha;
};

inline const std::vector<double> kDefaultRocBands = {0.0, 0.05, 0.10, 0.15, 0.20};

// Band minimizing the target metric's fairness cost on the validation
// predictions. Bands outside [0, min(tau, 1 - tau)] are skipped; ties go to
// the smaller band; 0 when no band yields a defined metric.
double roc_select_band(const ValidationSet& validation, double tau, std::span<const double> bands, MetricId target);

// ---------------------------------------------------------------------------
// Calibrated equalized odds

enum class CeoCost { fnr, fpr, weighted };
std::string_view to_string(CeoCost cost);
CeoCost parse_ceo_cost(std::string_view text);

struct CeoPlan {
  int mixed_group = -1;  // group whose scores get mixed; -1 = none
  double mix_rate = 0.0;
  double base_rate = 0.0;  // validation base rate of mixed_group
  std::array<std::optional<double>, 2> group_cost{};
  std::array<double, 2> group_base_rate{};
};

// (cost_high - cost_low) / (trivial_low - cost_low), clamped to [0, 1];
// 0 for a non-positive denominator.
double ceo_mix_rate(double cost_low, double cost_high, double trivial_low);

// Generalized cost of a score vector for one group.
std::optional<double> ceo_group_cost(std::span<const double> scores, std::span<const int> y, CeoCost cost,
                                     double base_rate);

CeoPlan ceo_fit(const ValidationSet& validation, CeoCost cost);
// Rows of plan.mixed_group independently take the group base rate with
// probability plan.mix_rate; all other scores pass through untouched.
std::vector<double> ceo_apply(const CeoPlan& plan, std::span<const double> scores, std::span<const int> groups,
                              Rng& rng);
std::vector<double> ceo_adjust(const ValidationSet& validation, std::span<const double> scores,
                               std::span<const int> groups, CeoCost cost, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Exponentiated gradient reduction

enum class EgrConstraint { demographic_parity, equalized_odds };
std::string_view to_string(EgrConstraint c);
EgrConstraint parse_egr_constraint(std::string_view text);

struct EgrOptions {
  double epsilon = 0.01;
  int rounds = 50;
  double bound = 100.0;
  double eta = 2.0;
  EgrConstraint constraint = EgrConstraint::demographic_parity;

  void validate() const;
};

struct EgrTrace {
  // Multipliers used for each round's best response.
  std::vector<std::vector<double>> multipliers;
  // Constraint violations (gamma - epsilon) of each round's classifier.
  std::vector<std::vector<double>> violations;
};

// Runs `rounds` best-response fits against exponentiated-gradient
// multipliers and returns the uniform mixture of the fitted rounds.
// lambda_k = B phi_k / (B + sum phi) with phi = exp(theta) - 1, so the first
// round is the plain fit and ||lambda||_1 < B; theta moves by
// eta / sqrt(t + 1) times the violation and is clipped at 0.
// `weights` may be empty (all ones).
FittedModel egr_train(const EstimatorSpec& base, const Eigen::MatrixXd& X, std::span<const int> y,
                      std::span<const int> groups, const EgrOptions& options, std::span<const double> weights = {},
                      EgrTrace* trace = nullptr);

// ---------------------------------------------------------------------------
// Pipelines

struct MitigationOptions {
  std::vector<double> roc_bands = kDefaultRocBands;
  CeoCost ceo_cost = CeoCost::fnr;
  EgrOptions egr;
  // Fairness metric the post-processors tune for.
  MetricId target_metric = MetricId::SPD;
  std::size_t cns_neighbors = kDefaultConsistencyNeighbors;
  double gei_alpha = kDefaultGeiAlpha;
};

struct MitigationContext {
  const Eigen::MatrixXd* train_X = nullptr;
  std::span<const int> train_y;
  std::span<const int> train_groups;
  const Eigen::MatrixXd* test_X = nullptr;
  std::span<const int> test_groups;
  EstimatorSpec base;
  MitigationOptions options;
  std::uint64_t seed = 0;
};

// Fitted pipeline plus cached test scores; thresholds are applied lazily.
class PipelineOutcome {
 public:
  const FittedModel& model() const { return model_; }
  const std::vector<double>& train_weights() const { return train_weights_; }
  // Test scores after any score-level post-processing.
  const std::vector<double>& test_scores() const { return test_scores_; }
  const std::optional<CeoPlan>& ceo_plan() const { return ceo_; }
  bool uses_roc() const { return roc_; }

  // Band chosen for tau, 0 when ROC is not part of the pipeline.
  double roc_band(double tau) const;
  std::vector<int> predict(double tau) const;

  nlohmann::json to_json(std::span<const double> taus) const;

 private:
  friend PipelineOutcome run_pipeline(const MitigationSteps&, const MitigationContext&);

  MitigationSteps steps_;
  FittedModel model_;
  std::vector<double> train_weights_;
  std::vector<double> test_scores_;
  std::vector<int> test_groups_;
  std::optional<CeoPlan> ceo_;
  bool roc_ = false;
  std::vector<double> roc_bands_;
  MetricId target_ = MetricId::SPD;
  double gei_alpha_ = kDefaultGeiAlpha;
  // In-sample training predictions for tuning ROC.
  std::vector<double> train_scores_;
  std::vector<int> train_y_;
  std::vector<int> train_groups_;
  std::optional<NeighborLists> train_neighbors_;
};

PipelineOutcome run_pipeline(const MitigationSteps& steps, const MitigationContext& ctx);
PipelineOutcome apply_mitigation(MitigationId id, const MitigationContext& ctx);

}  // namespace fairgrid
