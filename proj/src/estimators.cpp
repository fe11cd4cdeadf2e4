#include "fairgrid/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "fairgrid/csv.hpp"
#include "fairgrid/error.hpp"
#include "fairgrid/random.hpp"
#include "fairgrid/tree.hpp"

namespace fairgrid {
namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// --- parameter access ------------------------------------------------------

double get_real(const ParamMap& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  if (it == p.end()) return fallback;
  if (const auto* i = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&it->second)) return *d;
  throw ConfigError(fmt::format("parameter '{}' must be numeric", key));
}

std::int64_t get_int(const ParamMap& p, const std::string& key, std::int64_t fallback) {
  const auto it = p.find(key);
  if (it == p.end()) return fallback;
  if (const auto* i = std::get_if<std::int64_t>(&it->second)) return *i;
  if (const auto* d = std::get_if<double>(&it->second)) {
    if (std::floor(*d) == *d && std::abs(*d) < 9e15) return static_cast<std::int64_t>(*d);
  }
  throw ConfigError(fmt::format("parameter '{}' must be an integer", key));
}

std::string get_string(const ParamMap& p, const std::string& key, const std::string& fallback) {
  const auto it = p.find(key);
  if (it == p.end()) return fallback;
  if (const auto* s = std::get_if<std::string>(&it->second)) return *s;
  throw ConfigError(fmt::format("parameter '{}' must be a string", key));
}

void require_keys(const ParamMap& p, BaseKind kind, std::initializer_list<const char*> allowed) {
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : p) {
    if (!ok.contains(key)) {
      throw ConfigError(fmt::format("unknown parameter '{}' for base estimator {}", key, to_string(kind)));
    }
  }
}

void require_choice(const std::string& key, const std::string& value,
                    std::initializer_list<const char*> choices) {
  for (const char* c : choices) {
    if (value == c) return;
  }
  throw ConfigError(fmt::format("parameter '{}' has unsupported value '{}'", key, value));
}

// --- models ------------------------------------------------------------------

class LogisticModel final : public Classifier {
 public:
  LogisticModel(Info info, Eigen::VectorXd coef, double intercept)
      : Classifier(std::move(info)), coef_(std::move(coef)), intercept_(intercept) {}

  nlohmann::json learned_json() const override {
    return {{"coef", std::vector<double>(coef_.data(), coef_.data() + coef_.size())},
            {"intercept", intercept_}};
  }

 protected:
  std::vector<double> raw_scores(const Eigen::MatrixXd& X) const override {
    const Eigen::VectorXd z = (X * coef_).array() + intercept_;
    std::vector<double> out(static_cast<std::size_t>(z.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) out[static_cast<std::size_t>(i)] = sigmoid(z(i));
    return out;
  }

 private:
  Eigen::VectorXd coef_;
  double intercept_;
};

class NaiveBayesModel final : public Classifier {
 public:
  // Row c of mean/var holds the class-c Gaussian parameters.
  NaiveBayesModel(Info info, Eigen::MatrixXd mean, Eigen::MatrixXd var, Eigen::Vector2d log_prior)
      : Classifier(std::move(info)), mean_(std::move(mean)), var_(std::move(var)), log_prior_(log_prior) {}

  nlohmann::json learned_json() const override {
    auto rows = [](const Eigen::MatrixXd& m) {
      std::vector<std::vector<double>> out;
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        out.push_back(std::move(row));
      }
      return out;
    };
    return {{"theta", rows(mean_)}, {"var", rows(var_)}, {"log_prior", {log_prior_(0), log_prior_(1)}}};
  }

 protected:
  std::vector<double> raw_scores(const Eigen::MatrixXd& X) const override {
    std::vector<double> out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      double joint[2];
      for (int c = 0; c < 2; ++c) {
        double ll = log_prior_(c);
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
          const double d = X(i, j) - mean_(c, j);
          ll -= 0.5 * (std::log(2.0 * std::numbers::pi * var_(c, j)) + d * d / var_(c, j));
        }
        joint[c] = ll;
      }
      out[static_cast<std::size_t>(i)] = sigmoid(joint[1] - joint[0]);
    }
    return out;
  }

 private:
  Eigen::MatrixXd mean_;
  Eigen::MatrixXd var_;
  Eigen::Vector2d log_prior_;
};

class ForestModel final : public Classifier {
 public:
  ForestModel(Info info, std::vector<DecisionTree> trees)
      : Classifier(std::move(info)), trees_(std::move(trees)) {}

  nlohmann::json learned_json() const override {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) trees.push_back(t.to_json());
    return {{"trees", trees}};
  }

 protected:
  std::vector<double> raw_scores(const Eigen::MatrixXd& X) const override {
    std::vector<double> out(static_cast<std::size_t>(X.rows()), 0.0);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      double sum = 0.0;
      for (const auto& t : trees_) sum += t.predict(X, i);
      out[static_cast<std::size_t>(i)] = sum / static_cast<double>(trees_.size());
    }
    return out;
  }

 private:
  std::vector<DecisionTree> trees_;
};

class BoostingModel final : public Classifier {
 public:
  BoostingModel(Info info, double init, double learning_rate, std::vector<DecisionTree> trees)
      : Classifier(std::move(info)), init_(init), learning_rate_(learning_rate), trees_(std::move(trees)) {}

  nlohmann::json learned_json() const override {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) trees.push_back(t.to_json());
    return {{"init", init_}, {"learning_rate", learning_rate_}, {"trees", trees}};
  }

 protected:
  std::vector<double> raw_scores(const Eigen::MatrixXd& X) const override {
    std::vector<double> out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      double f = init_;
      for (const auto& t : trees_) f += learning_rate_ * t.predict(X, i);
      out[static_cast<std::size_t>(i)] = sigmoid(f);
    }
    return out;
  }

 private:
  double init_;
  double learning_rate_;
  std::vector<DecisionTree> trees_;
};

class ConstantModel final : public Classifier {
 public:
  ConstantModel(Info info, double p) : Classifier(std::move(info)), p_(p) {}
  nlohmann::json learned_json() const override { return {{"probability", p_}}; }

 protected:
  std::vector<double> raw_scores(const Eigen::MatrixXd& X) const override {
    return std::vector<double>(static_cast<std::size_t>(X.rows()), p_);
  }

 private:
  double p_;
};

class EnsembleModel final : public Classifier {
 public:
  EnsembleModel(Info info, std::vector<FittedModel> members)
      : Classifier(std::move(info)), members_(std::move(members)) {}

  nlohmann::json learned_json() const override {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : members_) members.push_back(model_to_json(*m));
    return {{"members", members}};
  }

 protected:
  std::vector<double> raw_scores(const Eigen::MatrixXd& X) const override {
    std::vector<double> out(static_cast<std::size_t>(X.rows()), 0.0);
    for (const auto& m : members_) {
      const auto s = m->predict_proba(X);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += s[i];
    }
    for (double& v : out) v /= static_cast<double>(members_.size());
    return out;
  }

 private:
  std::vector<FittedModel> members_;
};

// --- fitting -----------------------------------------------------------------

struct Prepared {
  double weight_total = 0.0;
  double positive_weight = 0.0;
};

Prepared check_inputs(const Eigen::MatrixXd& X, std::span<const int> y, std::span<const double> w) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (y.size() != n || w.size() != n) {
    throw ContractError(fmt::format("fit: X has {} rows, y has {}, w has {}", n, y.size(), w.size()));
  }
  if (!X.allFinite()) throw DataError("fit: non-finite feature value");
  Prepared p;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(w[i] >= 0.0) || !std::isfinite(w[i])) throw ContractError("fit: weights must be finite and >= 0");
    if (y[i] != 0 && y[i] != 1) throw ContractError("fit: labels must be 0/1");
    p.weight_total += w[i];
    p.positive_weight += w[i] * y[i];
  }
  if (!(p.positive_weight > 0.0) || !(p.weight_total - p.positive_weight > 0.0)) {
    throw FitError("fit: both classes need positive total weight");
  }
  return p;
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double t, Eigen::Index penalized) {
  Eigen::VectorXd out = v;
  for (Eigen::Index j = 0; j < penalized; ++j) {
    const double a = std::abs(v(j)) - t;
    out(j) = a > 0 ? std::copysign(a, v(j)) : 0.0;
  }
  return out;
}

FittedModel fit_logistic(const EstimatorSpec& spec, const Eigen::MatrixXd& X, std::span<const int> y,
                         std::span<const double> w, Classifier::Info info) {
  const double C = get_real(spec.params, "C", 1.0);
  std::string penalty = get_string(spec.params, "solver", "liblinear") == "saga" ? "l1" : "l2";
  penalty = get_string(spec.params, "penalty", penalty);
  const auto max_iter = get_int(spec.params, "max_iter", 5000);
  const double tol = get_real(spec.params, "tol", 1e-6);
  const double lambda = penalty_strength(C);
  const double l2 = penalty == "l2" ? lambda : 0.0;
  const double l1 = penalty == "l1" ? lambda : 0.0;
  const Eigen::Index d = X.cols();

  auto smooth = [&](const Eigen::VectorXd& t) { return logistic_objective(t, X, y, w, l2); };
  auto grad = [&](const Eigen::VectorXd& t) { return logistic_gradient(t, X, y, w, l2); };
  auto l1_norm = [&](const Eigen::VectorXd& t) { return l1 > 0 ? l1 * t.head(d).lpNorm<1>() : 0.0; };
  // Optimality residual: gradient for L2, proximal gradient mapping for L1.
  auto residual = [&](const Eigen::VectorXd& t, const Eigen::VectorXd& g) {
    if (l1 == 0.0) return g.lpNorm<Eigen::Infinity>();
    return (t - soft_threshold(t - g, l1, d)).lpNorm<Eigen::Infinity>();
  };

  // FISTA with backtracking and function-value restart.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd v = x;
  double t = 1.0;
  double L = 1.0;
  double fx = smooth(x) + l1_norm(x);
  Eigen::VectorXd gx = grad(x);
  for (std::int64_t it = 0; it < max_iter; ++it) {
    if (residual(x, gx) < tol) break;
    const double fv = smooth(v);
    const Eigen::VectorXd gv = grad(v);
    Eigen::VectorXd next;
    double f_next = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      next = soft_threshold(v - gv / L, l1 / L, d);
      const Eigen::VectorXd diff = next - v;
      f_next = smooth(next);
      if (f_next <= fv + gv.dot(diff) + 0.5 * L * diff.squaredNorm() + 1e-15 * std::abs(fv)) break;
      L *= 2.0;
    }
    const double F_next = f_next + l1_norm(next);
    if (F_next > fx) {
      // Momentum overshot: restart from the last accepted iterate. Without
      // momentum a rejected step means no further progress is possible.
      if (t == 1.0) break;
      v = x;
      t = 1.0;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    v = next + ((t - 1.0) / t_next) * (next - x);
    x = std::move(next);
    fx = F_next;
    gx = grad(x);
    t = t_next;
    L *= 0.9;
  }
  Eigen::VectorXd coef = x.head(d);
  return std::make_shared<LogisticModel>(std::move(info), std::move(coef), x(d));
}

FittedModel fit_naive_bayes(const EstimatorSpec& spec, const Eigen::MatrixXd& X, std::span<const int> y,
                            std::span<const double> w, const Prepared& prep, Classifier::Info info) {
  const double smoothing = get_real(spec.params, "var_smoothing", 1e-9);
  const Eigen::Index d = X.cols();
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(2, d);
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(2, d);
  double cw[2] = {0.0, 0.0};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = y[static_cast<std::size_t>(i)];
    const double wi = w[static_cast<std::size_t>(i)];
    cw[c] += wi;
    mean.row(c) += wi * X.row(i);
  }
  for (int c = 0; c < 2; ++c) mean.row(c) /= cw[c];
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = y[static_cast<std::size_t>(i)];
    var.row(c) += w[static_cast<std::size_t>(i)] * (X.row(i) - mean.row(c)).array().square().matrix();
  }
  for (int c = 0; c < 2; ++c) var.row(c) /= cw[c];

  // Variance floor relative to the largest weighted feature variance.
  double max_var = 0.0;
  if (d > 0) {
    const Eigen::RowVectorXd overall = (mean.row(0) * cw[0] + mean.row(1) * cw[1]) / prep.weight_total;
    Eigen::RowVectorXd total = Eigen::RowVectorXd::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i) {
      total += w[static_cast<std::size_t>(i)] * (X.row(i) - overall).array().square().matrix();
    }
    max_var = (total / prep.weight_total).maxCoeff();
  }
  const double epsilon = smoothing * max_var;
  const double floor = 1e-12 * std::max(1.0, max_var);
  var = (var.array() + epsilon).max(floor).matrix();

  Eigen::Vector2d log_prior(std::log(cw[0] / prep.weight_total), std::log(cw[1] / prep.weight_total));
  return std::make_shared<NaiveBayesModel>(std::move(info), std::move(mean), std::move(var), log_prior);
}

TreeOptions tree_options(const EstimatorSpec& spec) {
  TreeOptions opt;
  const auto depth = get_int(spec.params, "max_depth", -1);
  opt.max_depth = depth <= 0 ? -1 : static_cast<int>(depth);
  opt.min_samples_leaf = static_cast<std::size_t>(get_int(spec.params, "min_samples_leaf", 1));
  return opt;
}

FittedModel fit_forest(const EstimatorSpec& spec, const Eigen::MatrixXd& X, std::span<const int> y,
                       std::span<const double> w, const Prepared& prep, Classifier::Info info) {
  const auto n_trees = get_int(spec.params, "n_estimators", 10);
  TreeOptions opt = tree_options(spec);
  opt.criterion = get_string(spec.params, "criterion", "gini") == "entropy" ? SplitCriterion::entropy
                                                                           : SplitCriterion::gini;
  const auto d = static_cast<std::size_t>(X.cols());
  opt.max_features = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));

  const auto n = y.size();
  std::vector<double> cumulative(n);
  std::partial_sum(w.begin(), w.end(), cumulative.begin());
  std::vector<double> targets(y.begin(), y.end());

  std::vector<DecisionTree> trees;
  for (std::int64_t t = 0; t < n_trees; ++t) {
    Rng rng(mix_seed({spec.seed, static_cast<std::uint64_t>(t)}));
    // Weight-proportional bootstrap of n draws; multiplicities become weights.
    std::vector<double> counts(n, 0.0);
    for (std::size_t draw = 0; draw < n; ++draw) {
      const double u = rng.uniform() * prep.weight_total;
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
      if (it == cumulative.end()) --it;
      auto idx = static_cast<std::size_t>(it - cumulative.begin());
      while (w[idx] <= 0.0 && idx + 1 < n) ++idx;
      counts[idx] += 1.0;
    }
    trees.push_back(grow_tree(X, targets, counts, opt, &rng));
  }
  return std::make_shared<ForestModel>(std::move(info), std::move(trees));
}

FittedModel fit_boosting(const EstimatorSpec& spec, const Eigen::MatrixXd& X, std::span<const int> y,
                         std::span<const double> w, const Prepared& prep, Classifier::Info info) {
  const auto n_stages = get_int(spec.params, "n_estimators", 100);
  const double learning_rate = get_real(spec.params, "learning_rate", 0.1);
  TreeOptions opt;
  opt.criterion = SplitCriterion::squared_error;
  const auto depth = get_int(spec.params, "max_depth", 3);
  opt.max_depth = static_cast<int>(depth);

  const auto n = y.size();
  const double p0 = prep.positive_weight / prep.weight_total;
  const double init = std::log(p0 / (1.0 - p0));
  std::vector<double> F(n, init), residual(n), hessian(n);

  auto newton_leaf = [&](std::span<const std::size_t> rows) {
    double num = 0.0, den = 0.0;
    for (std::size_t r : rows) {
      num += w[r] * residual[r];
      den += w[r] * hessian[r];
    }
    return std::abs(den) < 1e-150 ? 0.0 : num / den;
  };

  std::vector<DecisionTree> trees;
  for (std::int64_t m = 0; m < n_stages; ++m) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(F[i]);
      residual[i] = y[i] - p;
      hessian[i] = p * (1.0 - p);
    }
    DecisionTree tree = grow_tree(X, residual, w, opt, nullptr, newton_leaf);
    for (std::size_t i = 0; i < n; ++i) F[i] += learning_rate * tree.predict(X, static_cast<Eigen::Index>(i));
    trees.push_back(std::move(tree));
  }
  return std::make_shared<BoostingModel>(std::move(info), init, learning_rate, std::move(trees));
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(BaseKind kind) {
  switch (kind) {
    case BaseKind::LR: return "LR";
    case BaseKind::RF: return "RF";
    case BaseKind::GB: return "GB";
    case BaseKind::GNB: return "GNB";
    case BaseKind::SVM: return "SVM";
    case BaseKind::TABTRANS: return "TABTRANS";
  }
  return "?";
}

BaseKind parse_base_kind(std::string_view text) {
  if (text == "LR") return BaseKind::LR;
  if (text == "RF") return BaseKind::RF;
  if (text == "GB") return BaseKind::GB;
  if (text == "GNB" || text == "NB") return BaseKind::GNB;
  if (text == "SVM") return BaseKind::SVM;
  if (text == "TABTRANS" || text == "TabTrans") return BaseKind::TABTRANS;
  throw ConfigError(fmt::format("unknown base estimator '{}'", text));
}

bool is_implemented(BaseKind kind) { return kind != BaseKind::SVM && kind != BaseKind::TABTRANS; }

std::string format_param(const ParamValue& value) {
  if (const auto* i = std::get_if<std::int64_t>(&value)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&value)) return format_double(*d);
  return std::get<std::string>(value);
}

std::string canonical_params(const ParamMap& params) {
  std::string out;
  for (const auto& [key, value] : params) {
    if (!out.empty()) out += ';';
    out += key;
    out += '=';
    out += format_param(value);
  }
  return out;
}

nlohmann::json params_to_json(const ParamMap& params) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, value] : params) {
    std::visit([&](const auto& v) { j[key] = v; }, value);
  }
  return j;
}

ParamMap params_from_json(const nlohmann::json& j) {
  ParamMap out;
  for (const auto& [key, value] : j.items()) {
    if (value.is_number_integer()) {
      out[key] = value.get<std::int64_t>();
    } else if (value.is_number()) {
      out[key] = value.get<double>();
    } else if (value.is_string()) {
      out[key] = value.get<std::string>();
    } else {
      throw ConfigError(fmt::format("parameter '{}' must be a scalar", key));
    }
  }
  return out;
}

void EstimatorSpec::validate() const {
  const ParamMap& p = params;
  switch (kind) {
    case BaseKind::LR: {
      require_keys(p, kind, {"C", "solver", "penalty", "max_iter", "tol"});
      if (!(get_real(p, "C", 1.0) > 0.0)) throw ConfigError("LR: C must be > 0");
      require_choice("solver", get_string(p, "solver", "liblinear"), {"liblinear", "saga", "lbfgs"});
      require_choice("penalty", get_string(p, "penalty", "l2"), {"l1", "l2"});
      if (get_int(p, "max_iter", 5000) < 1) throw ConfigError("LR: max_iter must be >= 1");
      if (!(get_real(p, "tol", 1e-6) > 0.0)) throw ConfigError("LR: tol must be > 0");
      break;
    }
    case BaseKind::RF: {
      require_keys(p, kind, {"n_estimators", "criterion", "max_depth", "min_samples_leaf"});
      if (get_int(p, "n_estimators", 10) < 1) throw ConfigError("RF: n_estimators must be >= 1");
      require_choice("criterion", get_string(p, "criterion", "gini"), {"gini", "entropy"});
      if (get_int(p, "max_depth", 1) < 1) throw ConfigError("RF: max_depth must be >= 1");
      if (get_int(p, "min_samples_leaf", 1) < 1) throw ConfigError("RF: min_samples_leaf must be >= 1");
      break;
    }
    case BaseKind::GB: {
      require_keys(p, kind, {"n_estimators", "max_depth", "learning_rate", "criterion"});
      if (get_int(p, "n_estimators", 100) < 1) throw ConfigError("GB: n_estimators must be >= 1");
      if (get_int(p, "max_depth", 3) < 1) throw ConfigError("GB: max_depth must be >= 1");
      if (!(get_real(p, "learning_rate", 0.1) > 0.0)) throw ConfigError("GB: learning_rate must be > 0");
      require_choice("criterion", get_string(p, "criterion", "friedman_mse"),
                     {"friedman_mse", "squared_error"});
      break;
    }
    case BaseKind::GNB: {
      require_keys(p, kind, {"var_smoothing"});
      if (!(get_real(p, "var_smoothing", 1e-9) >= 0.0)) throw ConfigError("GNB: var_smoothing must be >= 0");
      break;
    }
    case BaseKind::SVM:
    case BaseKind::TABTRANS:
      throw NotImplementedError(fmt::format("base estimator {} is not implemented", to_string(kind)));
  }
}

std::vector<double> Classifier::predict_proba(const Eigen::MatrixXd& X) const {
  if (static_cast<std::size_t>(X.cols()) != info_.n_features) {
    throw ContractError(fmt::format("predict_proba: model expects {} features, got {}",
                                    info_.n_features, X.cols()));
  }
  std::vector<double> scores = raw_scores(X);
  for (double& s : scores) {
    if (std::isnan(s)) throw ContractError("predict_proba: NaN score");
    s = std::clamp(s, 0.0, 1.0);
  }
  return scores;
}

FittedModel fit(const EstimatorSpec& spec, const Eigen::MatrixXd& X, std::span<const int> y,
                std::span<const double> w) {
  spec.validate();
  const Prepared prep = check_inputs(X, y, w);
  Classifier::Info info{std::string(to_string(spec.kind)), spec.params, spec.seed, prep.weight_total,
                        static_cast<std::size_t>(X.cols())};
  switch (spec.kind) {
    case BaseKind::LR: return fit_logistic(spec, X, y, w, std::move(info));
    case BaseKind::GNB: return fit_naive_bayes(spec, X, y, w, prep, std::move(info));
    case BaseKind::RF: return fit_forest(spec, X, y, w, prep, std::move(info));
    case BaseKind::GB: return fit_boosting(spec, X, y, w, prep, std::move(info));
    default: break;
  }
  throw NotImplementedError(fmt::format("base estimator {} is not implemented", to_string(spec.kind)));
}

FittedModel fit(const EstimatorSpec& spec, const FeatureMatrix& X, std::span<const int> y,
                std::span<const double> w) {
  return fit(spec, X.values, y, w);
}

std::vector<double> predict_proba(const Classifier& model, const FeatureMatrix& X) {
  return model.predict_proba(X.values);
}

std::vector<int> apply_threshold(std::span<const double> scores, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError(fmt::format("threshold {} outside (0, 1)", tau));
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= tau ? 1 : 0;
  return out;
}

FittedModel make_constant_model(double probability, std::size_t n_features) {
  Classifier::Info info{"CONSTANT", {}, 0, 0.0, n_features};
  return std::make_shared<ConstantModel>(std::move(info), std::clamp(probability, 0.0, 1.0));
}

FittedModel make_ensemble_model(std::vector<FittedModel> members, ParamMap params) {
  if (members.empty()) throw ContractError("ensemble: no members");
  const std::size_t d = members.front()->n_features();
  for (const auto& m : members) {
    if (m->n_features() != d) throw ContractError("ensemble: members disagree on feature count");
  }
  Classifier::Info info{"ENSEMBLE", std::move(params), members.front()->info().seed, 0.0, d};
  return std::make_shared<EnsembleModel>(std::move(info), std::move(members));
}

nlohmann::json model_to_json(const Classifier& model) {
  const auto& info = model.info();
  return {{"format_version", kModelFormatVersion},
          {"kind", info.kind},
          {"params", params_to_json(info.params)},
          {"seed", info.seed},
          {"weight_total", info.weight_total},
          {"n_features", info.n_features},
          {"learned", model.learned_json()}};
}

FittedModel model_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != kModelFormatVersion) {
    throw DataError("model: unsupported format_version");
  }
  Classifier::Info info{j.at("kind").get<std::string>(), params_from_json(j.at("params")),
                        j.at("seed").get<std::uint64_t>(), j.at("weight_total").get<double>(),
                        j.at("n_features").get<std::size_t>()};
  const auto& learned = j.at("learned");
  const auto d = static_cast<Eigen::Index>(info.n_features);
  auto trees = [&](const nlohmann::json& arr) {
    std::vector<DecisionTree> out;
    for (const auto& t : arr) out.push_back(DecisionTree::from_json(t));
    return out;
  };
  if (info.kind == "LR") {
    const auto coef = learned.at("coef").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(coef.size()) != d) throw DataError("model: coefficient count mismatch");
    Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(coef.data(), d);
    return std::make_shared<LogisticModel>(std::move(info), std::move(c), learned.at("intercept").get<double>());
  }
  if (info.kind == "GNB") {
    auto matrix = [&](const nlohmann::json& rows) {
      Eigen::MatrixXd m(2, d);
      for (Eigen::Index r = 0; r < 2; ++r) {
        for (Eigen::Index c = 0; c < d; ++c) m(r, c) = rows.at(r).at(c).get<double>();
      }
      return m;
    };
    Eigen::Vector2d prior(learned.at("log_prior").at(0).get<double>(), learned.at("log_prior").at(1).get<double>());
    return std::make_shared<NaiveBayesModel>(std::move(info), matrix(learned.at("theta")),
                                             matrix(learned.at("var")), prior);
  }
  if (info.kind == "RF") return std::make_shared<ForestModel>(std::move(info), trees(learned.at("trees")));
  if (info.kind == "GB") {
    return std::make_shared<BoostingModel>(std::move(info), learned.at("init").get<double>(),
                                           learned.at("learning_rate").get<double>(),
                                           trees(learned.at("trees")));
  }
  if (info.kind == "CONSTANT") {
    return std::make_shared<ConstantModel>(std::move(info), learned.at("probability").get<double>());
  }
  if (info.kind == "ENSEMBLE") {
    std::vector<FittedModel> members;
    for (const auto& m : learned.at("members")) members.push_back(model_from_json(m));
    return std::make_shared<EnsembleModel>(std::move(info), std::move(members));
  }
  throw DataError(fmt::format("model: unknown kind '{}'", info.kind));
}

double logistic_objective(const Eigen::VectorXd& theta, const Eigen::MatrixXd& X, std::span<const int> y,
                          std::span<const double> w, double l2) {
  const Eigen::Index d = X.cols();
  const Eigen::VectorXd z = (X * theta.head(d)).array() + theta(d);
  double loss = 0.0, total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    loss += w[k] * (softplus(z(i)) - y[k] * z(i));
    total += w[k];
  }
  return loss / total + 0.5 * l2 * theta.head(d).squaredNorm();
}

Eigen::VectorXd logistic_gradient(const Eigen::VectorXd& theta, const Eigen::MatrixXd& X,
                                  std::span<const int> y, std::span<const double> w, double l2) {
  const Eigen::Index d = X.cols();
  const Eigen::VectorXd z = (X * theta.head(d)).array() + theta(d);
  Eigen::VectorXd r(z.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    r(i) = w[k] * (sigmoid(z(i)) - y[k]);
    total += w[k];
  }
  Eigen::VectorXd g(d + 1);
  g.head(d) = X.transpose() * r / total + l2 * theta.head(d);
  g(d) = r.sum() / total;
  return g;
}

}  // namespace fairgrid
