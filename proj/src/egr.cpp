#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fairgrid/error.hpp"
#include "fairgrid/mitigation.hpp"

namespace fairgrid {

std::string_view to_string(EgrConstraint c) {
  return c == EgrConstraint::demographic_parity ? "demographic_parity" : "equalized_odds";
}

EgrConstraint parse_egr_constraint(std::string_view text) {
  if (text == "demographic_parity" || text == "DP") return EgrConstraint::demographic_parity;
  if (text == "equalized_odds" || text == "EO") return EgrConstraint::equalized_odds;
  throw ConfigError(fmt::format("unknown EGR constraint '{}'", text));
}

void EgrOptions::validate() const {
  if (!(epsilon >= 0.0 && std::isfinite(epsilon))) throw ConfigError("EGR: epsilon must be >= 0");
  if (rounds < 1) throw ConfigError("EGR: rounds must be >= 1");
  if (!(bound > 0.0 && std::isfinite(bound))) throw ConfigError("EGR: bound must be > 0");
  if (!(eta > 0.0 && std::isfinite(eta))) throw ConfigError("EGR: eta must be > 0");
}

namespace {

// Constraint k = (event e, group a, sign). Layout: k = (e * 2 + a) * 2 + sign,
// sign 0 for gamma - eps <= 0 and 1 for -gamma - eps <= 0.
struct Events {
  std::size_t count = 0;
  std::vector<int> of_row;  // -1 when the row belongs to no event
  std::vector<double> weight;        // W_e
  std::vector<double> group_weight;  // W_{e,a} at e * 2 + a
};

Events build_events(std::span<const int> y, std::span<const int> groups, std::span<const double> w,
                    EgrConstraint c) {
  Events ev;
  ev.count = c == EgrConstraint::demographic_parity ? 1 : 2;
  ev.of_row.resize(y.size());
  ev.weight.assign(ev.count, 0.0);
  ev.group_weight.assign(ev.count * 2, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int e = c == EgrConstraint::demographic_parity ? 0 : y[i];
    ev.of_row[i] = e;
    ev.weight[static_cast<std::size_t>(e)] += w[i];
    ev.group_weight[static_cast<std::size_t>(e * 2 + groups[i])] += w[i];
  }
  return ev;
}

// gamma_{e,a} = P(h = 1 | e, a) - P(h = 1 | e); 0 for empty cells.
std::vector<double> moments(const Events& ev, std::span<const int> h, std::span<const int> groups,
                            std::span<const double> w) {
  std::vector<double> event_pos(ev.count, 0.0), cell_pos(ev.count * 2, 0.0);
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (ev.of_row[i] < 0 || !h[i]) continue;
    const auto e = static_cast<std::size_t>(ev.of_row[i]);
    event_pos[e] += w[i];
    cell_pos[e * 2 + static_cast<std::size_t>(groups[i])] += w[i];
  }
  std::vector<double> gamma(ev.count * 2, 0.0);
  for (std::size_t e = 0; e < ev.count; ++e) {
    if (ev.weight[e] <= 0.0) continue;
    const double overall = event_pos[e] / ev.weight[e];
    for (std::size_t a = 0; a < 2; ++a) {
      const double wa = ev.group_weight[e * 2 + a];
      if (wa > 0.0) gamma[e * 2 + a] = cell_pos[e * 2 + a] / wa - overall;
    }
  }
  return gamma;
}

std::vector<double> multipliers(const std::vector<double>& theta, double bound) {
  double denom = bound;
  std::vector<double> phi(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    phi[k] = std::expm1(theta[k]);
    denom += phi[k];
  }
  for (double& v : phi) v = bound * v / denom;
  return phi;
}

}  // namespace

FittedModel egr_train(const EstimatorSpec& base, const Eigen::MatrixXd& X, std::span<const int> y,
                      std::span<const int> groups, const EgrOptions& options, std::span<const double> weights,
                      EgrTrace* trace) {
  options.validate();
  const auto n = static_cast<std::size_t>(X.rows());
  if (y.size() != n || groups.size() != n || (!weights.empty() && weights.size() != n)) {
    throw ContractError("egr_train: length mismatch");
  }
  std::vector<double> w(n, 1.0);
  if (!weights.empty()) w.assign(weights.begin(), weights.end());
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 0.0)) throw FitError("egr_train: zero total weight");

  const Events ev = build_events(y, groups, w, options.constraint);
  const std::size_t n_constraints = ev.count * 4;
  std::vector<double> theta(n_constraints, 0.0);

  std::vector<FittedModel> members;
  members.reserve(static_cast<std::size_t>(options.rounds));
  std::vector<int> labels(n);
  std::vector<double> cost_weights(n);

  for (int round = 0; round < options.rounds; ++round) {
    const std::vector<double> lambda = multipliers(theta, options.bound);
    // Net multiplier per (event, group).
    std::vector<double> mu(ev.count * 2);
    for (std::size_t c = 0; c < mu.size(); ++c) mu[c] = lambda[c * 2] - lambda[c * 2 + 1];
    std::vector<double> event_term(ev.count, 0.0);
    for (std::size_t e = 0; e < ev.count; ++e) {
      if (ev.weight[e] > 0.0) event_term[e] = (mu[e * 2] + mu[e * 2 + 1]) / ev.weight[e];
    }

    double pos_weight = 0.0, neg_weight = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double delta = 1.0 - 2.0 * y[i];
      const int e = ev.of_row[i];
      if (e >= 0) {
        const auto ue = static_cast<std::size_t>(e);
        const double wa = ev.group_weight[ue * 2 + static_cast<std::size_t>(groups[i])];
        const double own = wa > 0.0 ? mu[ue * 2 + static_cast<std::size_t>(groups[i])] / wa : 0.0;
        delta += total * (own - event_term[ue]);
      }
      delta *= w[i];
      labels[i] = delta < 0.0 ? 1 : 0;
      cost_weights[i] = std::abs(delta);
      (labels[i] ? pos_weight : neg_weight) += cost_weights[i];
    }

    FittedModel member;
    if (pos_weight > 0.0 && neg_weight > 0.0) {
      member = fit(base, X, labels, cost_weights);
    } else {
      member = make_constant_model(pos_weight > 0.0 ? 1.0 : 0.0, static_cast<std::size_t>(X.cols()));
    }
    const std::vector<int> hard = apply_threshold(member->predict_proba(X), 0.5);
    const std::vector<double> gamma = moments(ev, hard, groups, w);

    std::vector<double> violation(n_constraints);
    for (std::size_t c = 0; c < gamma.size(); ++c) {
      violation[c * 2] = gamma[c] - options.epsilon;
      violation[c * 2 + 1] = -gamma[c] - options.epsilon;
    }
    const double step = options.eta / std::sqrt(static_cast<double>(round + 1));
    for (std::size_t k = 0; k < n_constraints; ++k) {
      theta[k] = std::max(0.0, theta[k] + step * violation[k]);
    }
    if (trace != nullptr) {
      trace->multipliers.push_back(lambda);
      trace->violations.push_back(violation);
    }
    members.push_back(std::move(member));
  }

  spdlog::debug("EGR: {} rounds, constraint {}", options.rounds, to_string(options.constraint));
  ParamMap params{{"base", std::string(to_string(base.kind))},
                  {"constraint", std::string(to_string(options.constraint))},
                  {"epsilon", options.epsilon},
                  {"rounds", static_cast<std::int64_t>(options.rounds)},
                  {"bound", options.bound},
                  {"eta", options.eta}};
  return make_ensemble_model(std::move(members), std::move(params));
}

}  // namespace fairgrid
