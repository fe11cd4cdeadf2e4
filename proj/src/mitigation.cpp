#include "fairgrid/mitigation.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fairgrid/error.hpp"

namespace fairgrid {

std::string_view to_string(MitigationId id) {
  switch (id) {
    case MitigationId::NONE: return "NONE";
    case MitigationId::RW: return "RW";
    case MitigationId::ROC: return "ROC";
    case MitigationId::CEO: return "CEO";
    case MitigationId::EGR: return "EGR";
    case MitigationId::RW_ROC: return "RW_ROC";
    case MitigationId::RW_CEO: return "RW_CEO";
    case MitigationId::LFR_PRE: return "LFR_PRE";
    case MitigationId::LFR_IN: return "LFR_IN";
    case MitigationId::AD: return "AD";
  }
  return "?";
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::none: return "none";
    case Stage::pre: return "pre";
    case Stage::in: return "in";
    case Stage::post: return "post";
    case Stage::mixed: return "mixed";
  }
  return "?";
}

MitigationId parse_mitigation_id(std::string_view text) {
  static constexpr MitigationId all[] = {MitigationId::NONE,   MitigationId::RW,     MitigationId::ROC,
                                         MitigationId::CEO,    MitigationId::EGR,    MitigationId::RW_ROC,
                                         MitigationId::RW_CEO, MitigationId::LFR_PRE, MitigationId::LFR_IN,
                                         MitigationId::AD};
  for (MitigationId id : all) {
    if (to_string(id) == text) return id;
  }
  if (text == "RW+ROC") return MitigationId::RW_ROC;
  if (text == "RW+CEO") return MitigationId::RW_CEO;
  throw ConfigError(fmt::format("unknown mitigation id '{}'", text));
}

Stage stage_of(MitigationId id) {
  switch (id) {
    case MitigationId::NONE: return Stage::none;
    case MitigationId::RW:
    case MitigationId::LFR_PRE: return Stage::pre;
    case MitigationId::EGR:
    case MitigationId::LFR_IN:
    case MitigationId::AD: return Stage::in;
    case MitigationId::ROC:
    case MitigationId::CEO: return Stage::post;
    case MitigationId::RW_ROC:
    case MitigationId::RW_CEO: return Stage::mixed;
  }
  return Stage::none;
}

bool is_implemented(MitigationId id) {
  return id != MitigationId::LFR_PRE && id != MitigationId::LFR_IN && id != MitigationId::AD;
}

bool is_base_invariant(MitigationId id) { return id == MitigationId::LFR_IN || id == MitigationId::AD; }

MitigationSteps compose(std::span<const MitigationId> ids) {
  MitigationSteps steps;
  bool pre = false, in = false, post = false;
  auto claim = [](bool& slot, Stage stage) {
    if (slot) throw ConfigError(fmt::format("two {}-processing methods in one pipeline", to_string(stage)));
    slot = true;
  };
  for (MitigationId id : ids) {
    if (!is_implemented(id)) {
      throw NotImplementedError(fmt::format("mitigation {} is not implemented", to_string(id)));
    }
    switch (id) {
      case MitigationId::NONE: break;
      case MitigationId::RW:
        claim(pre, Stage::pre);
        steps.reweigh = true;
        break;
      case MitigationId::EGR:
        claim(in, Stage::in);
        steps.egr = true;
        break;
      case MitigationId::ROC:
        claim(post, Stage::post);
        steps.post = PostProcessor::roc;
        break;
      case MitigationId::CEO:
        claim(post, Stage::post);
        steps.post = PostProcessor::ceo;
        break;
      case MitigationId::RW_ROC:
      case MitigationId::RW_CEO:
        claim(pre, Stage::pre);
        claim(post, Stage::post);
        steps.reweigh = true;
        steps.post = id == MitigationId::RW_ROC ? PostProcessor::roc : PostProcessor::ceo;
        break;
      default: break;
    }
  }
  return steps;
}

MitigationSteps expand(MitigationId id) { return compose(std::span<const MitigationId>(&id, 1)); }

// ---------------------------------------------------------------------------

ReweighResult reweigh(std::span<const int> y, std::span<const int> groups) {
  if (y.size() != groups.size()) throw ContractError("reweigh: length mismatch");
  if (y.empty()) throw ContractError("reweigh: no instances");
  std::array<double, 4> cell{};
  double group_count[2] = {0, 0};
  double label_count[2] = {0, 0};
  for (std::size_t i = 0; i < y.size(); ++i) {
    cell[static_cast<std::size_t>(groups[i] * 2 + y[i])] += 1.0;
    group_count[groups[i]] += 1.0;
    label_count[y[i]] += 1.0;
  }
  const auto n = static_cast<double>(y.size());
  ReweighResult out;
  for (int s = 0; s < 2; ++s) {
    for (int l = 0; l < 2; ++l) {
      const auto k = static_cast<std::size_t>(s * 2 + l);
      if (cell[k] == 0.0) {
        out.empty_cell[k] = true;
        out.cell_weight[k] = 0.0;
      } else {
        // (n_s / n)(n_y / n) / (n_sy / n), rearranged to one division.
        out.cell_weight[k] = group_count[s] * label_count[l] / (n * cell[k]);
      }
    }
  }
  out.weights.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    out.weights[i] = out.cell_weight[static_cast<std::size_t>(groups[i] * 2 + y[i])];
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<int> roc_adjust(std::span<const double> scores, std::span<const int> groups, double tau, double band) {
  if (scores.size() != groups.size()) throw ContractError("roc_adjust: length mismatch");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError(fmt::format("threshold {} outside (0, 1)", tau));
  if (!(band >= 0.0 && band <= std::min(tau, 1.0 - tau))) {
    throw ConfigError(fmt::format("ROC band {} outside [0, {}]", band, std::min(tau, 1.0 - tau)));
  }
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (band > 0.0 && std::abs(scores[i] - tau) <= band) {
      out[i] = groups[i] ? 0 : 1;
    } else {
      out[i] = scores[i] >= tau ? 1 : 0;
    }
  }
  return out;
}

namespace {

std::optional<double> target_cost(const ValidationSet& v, std::span<const int> predicted, MetricId target) {
  MetricReport r;
  switch (target) {
    case MetricId::CNS:
      if (v.neighbors == nullptr) throw ContractError("roc_select_band: CNS target needs neighbour lists");
      r[MetricId::CNS] = consistency(*v.neighbors, predicted);
      break;
    case MetricId::GEI: r[MetricId::GEI] = generalized_entropy(v.y, predicted, v.gei_alpha); break;
    case MetricId::TI: r[MetricId::TI] = generalized_entropy(v.y, predicted, 1.0); break;
    default: r = group_fairness(confusion(v.y, predicted, v.groups)); break;
  }
  return fairness_cost(r[target], target);
}

}  // namespace

double roc_select_band(const ValidationSet& validation, double tau, std::span<const double> bands, MetricId target) {
  if (bands.empty()) throw ConfigError("roc_select_band: empty band grid");
  if (is_accuracy_metric(target)) throw ConfigError("roc_select_band: target must be a fairness metric");
  const double limit = std::min(tau, 1.0 - tau);
  std::optional<double> best_cost;
  double best_band = 0.0;
  for (double band : bands) {
    if (!(band >= 0.0 && band <= limit)) continue;
    const auto cost = target_cost(validation, roc_adjust(validation.scores, validation.groups, tau, band), target);
    if (!cost) continue;
    if (!best_cost || *cost < *best_cost || (*cost == *best_cost && band < best_band)) {
      best_cost = cost;
      best_band = band;
    }
  }
  return best_band;
}

// ---------------------------------------------------------------------------

std::string_view to_string(CeoCost cost) {
  switch (cost) {
    case CeoCost::fnr: return "fnr";
    case CeoCost::fpr: return "fpr";
    case CeoCost::weighted: return "weighted";
  }
  return "?";
}

CeoCost parse_ceo_cost(std::string_view text) {
  if (text == "fnr") return CeoCost::fnr;
  if (text == "fpr") return CeoCost::fpr;
  if (text == "weighted") return CeoCost::weighted;
  throw ConfigError(fmt::format("unknown CEO cost '{}'", text));
}

double ceo_mix_rate(double cost_low, double cost_high, double trivial_low) {
  const double den = trivial_low - cost_low;
  if (!(den > 0.0)) return 0.0;
  return std::clamp((cost_high - cost_low) / den, 0.0, 1.0);
}

std::optional<double> ceo_group_cost(std::span<const double> scores, std::span<const int> y, CeoCost cost,
                                     double base_rate) {
  double fn = 0.0, fp = 0.0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (y[i]) {
      fn += 1.0 - scores[i];
      ++pos;
    } else {
      fp += scores[i];
      ++neg;
    }
  }
  const std::optional<double> gfnr = pos ? std::optional(fn / static_cast<double>(pos)) : std::nullopt;
  const std::optional<double> gfpr = neg ? std::optional(fp / static_cast<double>(neg)) : std::nullopt;
  switch (cost) {
    case CeoCost::fnr: return gfnr;
    case CeoCost::fpr: return gfpr;
    case CeoCost::weighted:
      if (!gfnr || !gfpr) return std::nullopt;
      return 0.5 * *gfpr * (1.0 - base_rate) + 0.5 * *gfnr * base_rate;
  }
  return std::nullopt;
}

CeoPlan ceo_fit(const ValidationSet& v, CeoCost cost) {
  if (v.scores.size() != v.y.size() || v.groups.size() != v.y.size()) {
    throw ContractError("ceo_fit: length mismatch");
  }
  CeoPlan plan;
  std::array<std::vector<double>, 2> scores;
  std::array<std::vector<int>, 2> labels;
  for (std::size_t i = 0; i < v.y.size(); ++i) {
    scores[static_cast<std::size_t>(v.groups[i])].push_back(v.scores[i]);
    labels[static_cast<std::size_t>(v.groups[i])].push_back(v.y[i]);
  }
  if (scores[0].empty() || scores[1].empty()) throw DataError("ceo_fit: both groups must be present");
  std::array<std::optional<double>, 2> trivial;
  for (std::size_t g = 0; g < 2; ++g) {
    double pos = 0.0;
    for (int l : labels[g]) pos += l;
    plan.group_base_rate[g] = pos / static_cast<double>(labels[g].size());
    plan.group_cost[g] = ceo_group_cost(scores[g], labels[g], cost, plan.group_base_rate[g]);
    const std::vector<double> flat(labels[g].size(), plan.group_base_rate[g]);
    trivial[g] = ceo_group_cost(flat, labels[g], cost, plan.group_base_rate[g]);
  }
  if (!plan.group_cost[0] || !plan.group_cost[1] || *plan.group_cost[0] == *plan.group_cost[1]) return plan;
  const std::size_t low = *plan.group_cost[0] < *plan.group_cost[1] ? 0 : 1;
  const std::size_t high = 1 - low;
  if (!trivial[low]) return plan;
  plan.mix_rate = ceo_mix_rate(*plan.group_cost[low], *plan.group_cost[high], *trivial[low]);
  if (plan.mix_rate > 0.0) {
    plan.mixed_group = static_cast<int>(low);
    plan.base_rate = plan.group_base_rate[low];
  }
  return plan;
}

std::vector<double> ceo_apply(const CeoPlan& plan, std::span<const double> scores, std::span<const int> groups,
                              Rng& rng) {
  if (scores.size() != groups.size()) throw ContractError("ceo_apply: length mismatch");
  std::vector<double> out(scores.begin(), scores.end());
  if (plan.mixed_group < 0 || plan.mix_rate <= 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (groups[i] != plan.mixed_group) continue;
    // One draw per row of the mixed group keeps the stream independent of p.
    if (rng.uniform() < plan.mix_rate) out[i] = plan.base_rate;
  }
  return out;
}

std::vector<double> ceo_adjust(const ValidationSet& validation, std::span<const double> scores,
                               std::span<const int> groups, CeoCost cost, std::uint64_t seed) {
  Rng rng(seed);
  return ceo_apply(ceo_fit(validation, cost), scores, groups, rng);
}

// ---------------------------------------------------------------------------

double PipelineOutcome::roc_band(double tau) const {
  if (!roc_) return 0.0;
  ValidationSet v{train_scores_, train_y_, train_groups_, train_neighbors_ ? &*train_neighbors_ : nullptr,
                  gei_alpha_};
  return roc_select_band(v, tau, roc_bands_, target_);
}

std::vector<int> PipelineOutcome::predict(double tau) const {
  if (!roc_) return apply_threshold(test_scores_, tau);
  return roc_adjust(test_scores_, test_groups_, tau, roc_band(tau));
}

nlohmann::json PipelineOutcome::to_json(std::span<const double> taus) const {
  nlohmann::json j;
  j["reweigh"] = steps_.reweigh;
  j["egr"] = steps_.egr;
  j["model"] = model_to_json(*model_);
  if (steps_.reweigh) {
    const auto rw = reweigh(train_y_, train_groups_);
    j["reweigh_cell_weights"] = {{"unprivileged_unfavorable", rw.cell_weight[0]},
                                 {"unprivileged_favorable", rw.cell_weight[1]},
                                 {"privileged_unfavorable", rw.cell_weight[2]},
                                 {"privileged_favorable", rw.cell_weight[3]}};
  }
  if (roc_) {
    nlohmann::json bands = nlohmann::json::array();
    for (double tau : taus) bands.push_back({{"tau", tau}, {"band", roc_band(tau)}});
    j["post"] = {{"method", "ROC"}, {"target_metric", to_string(target_)}, {"bands", bands}};
  } else if (ceo_) {
    j["post"] = {{"method", "CEO"},
                 {"mixed_group", ceo_->mixed_group},
                 {"mix_rate", ceo_->mix_rate},
                 {"base_rate", ceo_->base_rate}};
  }
  return j;
}

PipelineOutcome run_pipeline(const MitigationSteps& steps, const MitigationContext& ctx) {
  if (ctx.train_X == nullptr || ctx.test_X == nullptr) throw ContractError("pipeline: missing feature matrices");
  const Eigen::MatrixXd& X = *ctx.train_X;
  const auto n = static_cast<std::size_t>(X.rows());
  if (ctx.train_y.size() != n || ctx.train_groups.size() != n) throw ContractError("pipeline: train length mismatch");
  if (ctx.test_groups.size() != static_cast<std::size_t>(ctx.test_X->rows())) {
    throw ContractError("pipeline: test length mismatch");
  }

  PipelineOutcome out;
  out.steps_ = steps;
  out.train_y_.assign(ctx.train_y.begin(), ctx.train_y.end());
  out.train_groups_.assign(ctx.train_groups.begin(), ctx.train_groups.end());
  out.test_groups_.assign(ctx.test_groups.begin(), ctx.test_groups.end());
  out.target_ = ctx.options.target_metric;
  out.gei_alpha_ = ctx.options.gei_alpha;

  out.train_weights_ = steps.reweigh ? reweigh(ctx.train_y, ctx.train_groups).weights : std::vector<double>(n, 1.0);

  EstimatorSpec spec = ctx.base;
  spec.seed = mix_seed({ctx.seed, 1});
  if (steps.egr) {
    out.model_ = egr_train(spec, X, ctx.train_y, ctx.train_groups, ctx.options.egr, out.train_weights_);
  } else {
    out.model_ = fit(spec, X, ctx.train_y, out.train_weights_);
  }
  out.test_scores_ = out.model_->predict_proba(*ctx.test_X);

  if (steps.post != PostProcessor::none) {
    out.train_scores_ = out.model_->predict_proba(X);
  }
  if (steps.post == PostProcessor::roc) {
    out.roc_ = true;
    out.roc_bands_ = ctx.options.roc_bands;
    if (out.roc_bands_.empty()) throw ConfigError("ROC: empty band grid");
    if (ctx.options.target_metric == MetricId::CNS) {
      out.train_neighbors_ = nearest_neighbors(X, ctx.options.cns_neighbors);
    }
  } else if (steps.post == PostProcessor::ceo) {
    ValidationSet v{out.train_scores_, out.train_y_, out.train_groups_, nullptr, ctx.options.gei_alpha};
    out.ceo_ = ceo_fit(v, ctx.options.ceo_cost);
    Rng rng(mix_seed({ctx.seed, 2}));
    out.test_scores_ = ceo_apply(*out.ceo_, out.test_scores_, ctx.test_groups, rng);
  }
  return out;
}

PipelineOutcome apply_mitigation(MitigationId id, const MitigationContext& ctx) {
  return run_pipeline(expand(id), ctx);
}

}  // namespace fairgrid
