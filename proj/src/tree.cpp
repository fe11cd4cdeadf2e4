#include "fairgrid/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fairgrid/error.hpp"

namespace fairgrid {
namespace {

double impurity(SplitCriterion criterion, double w, double pos) {
  if (w <= 0.0) return 0.0;
  const double p = pos / w;
  const double q = 1.0 - p;
  if (criterion == SplitCriterion::gini) return 1.0 - p * p - q * q;
  double h = 0.0;
  if (p > 0.0) h -= p * std::log2(p);
  if (q > 0.0) h -= q * std::log2(q);
  return h;
}

// Node statistics: total weight, weighted target sum.
struct Stats {
  double w = 0.0;
  double s = 0.0;
};

class Grower {
 public:
  Grower(const Eigen::MatrixXd& X, std::span<const double> t, std::span<const double> w,
         const TreeOptions& opt, Rng* rng, const LeafValueFn& leaf)
      : X_(X), t_(t), w_(w), opt_(opt), rng_(rng), leaf_(leaf) {}

  std::vector<TreeNode> run(std::vector<std::size_t> rows) {
    double total = 0.0;
    for (std::size_t r : rows) total += w_[r];
    min_gain_ = 1e-12 * std::max(total, 1.0);
    build(rows, 0);
    return std::move(nodes_);
  }

 private:
  double gain(const Stats& parent, const Stats& left, const Stats& right) const {
    if (opt_.criterion == SplitCriterion::squared_error) {
      return left.s * left.s / left.w + right.s * right.s / right.w - parent.s * parent.s / parent.w;
    }
    return parent.w * impurity(opt_.criterion, parent.w, parent.s) -
           left.w * impurity(opt_.criterion, left.w, left.s) -
           right.w * impurity(opt_.criterion, right.w, right.s);
  }

  double leaf_value(std::span<const std::size_t> rows, const Stats& st) const {
    if (leaf_) return leaf_(rows);
    return st.w > 0.0 ? st.s / st.w : 0.0;
  }

  int build(std::vector<std::size_t>& rows, int depth) {
    Stats st;
    for (std::size_t r : rows) {
      st.w += w_[r];
      st.s += w_[r] * t_[r];
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();

    const bool pure = opt_.criterion != SplitCriterion::squared_error &&
                      (st.s <= 0.0 || st.s >= st.w);
    const bool depth_cap = opt_.max_depth >= 0 && depth >= opt_.max_depth;
    if (pure || depth_cap || rows.size() < 2 * opt_.min_samples_leaf) {
      nodes_[static_cast<std::size_t>(id)].value = leaf_value(rows, st);
      return id;
    }

    const auto d = static_cast<std::size_t>(X_.cols());
    std::vector<std::size_t> candidates(d);
    std::iota(candidates.begin(), candidates.end(), 0);
    if (opt_.max_features > 0 && opt_.max_features < d) {
      if (rng_ == nullptr) throw ContractError("tree: feature subsampling needs a generator");
      for (std::size_t i = 0; i < opt_.max_features; ++i) {
        const auto j = i + static_cast<std::size_t>(rng_->index(d - i));
        std::swap(candidates[i], candidates[j]);
      }
      candidates.resize(opt_.max_features);
      std::sort(candidates.begin(), candidates.end());
    }

    double best_gain = min_gain_;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> order(rows);
    for (std::size_t f : candidates) {
      const auto col = static_cast<Eigen::Index>(f);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double va = X_(static_cast<Eigen::Index>(a), col);
        const double vb = X_(static_cast<Eigen::Index>(b), col);
        return va < vb || (va == vb && a < b);
      });
      Stats left;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const std::size_t r = order[i];
        left.w += w_[r];
        left.s += w_[r] * t_[r];
        const double v = X_(static_cast<Eigen::Index>(r), col);
        const double next = X_(static_cast<Eigen::Index>(order[i + 1]), col);
        if (!(v < next)) continue;
        const std::size_t n_left = i + 1;
        if (n_left < opt_.min_samples_leaf || order.size() - n_left < opt_.min_samples_leaf) continue;
        const Stats right{st.w - left.w, st.s - left.s};
        if (left.w <= 0.0 || right.w <= 0.0) continue;
        const double g = gain(st, left, right);
        if (g > best_gain) {
          best_gain = g;
          best_feature = static_cast<int>(f);
          double thr = 0.5 * (v + next);
          if (!(thr < next)) thr = v;
          best_threshold = thr;
        }
      }
    }

    if (best_feature < 0) {
      nodes_[static_cast<std::size_t>(id)].value = leaf_value(rows, st);
      return id;
    }

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) {
      (X_(static_cast<Eigen::Index>(r), best_feature) <= best_threshold ? left_rows : right_rows)
          .push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(left_rows, depth + 1);
    const int rr = build(right_rows, depth + 1);
    TreeNode& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = rr;
    node.value = st.w > 0.0 ? st.s / st.w : 0.0;
    return id;
  }

  const Eigen::MatrixXd& X_;
  std::span<const double> t_;
  std::span<const double> w_;
  const TreeOptions& opt_;
  Rng* rng_;
  const LeafValueFn& leaf_;
  double min_gain_ = 0.0;
  std::vector<TreeNode> nodes_;
};

}  // namespace

double DecisionTree::predict(const Eigen::MatrixXd& X, Eigen::Index row) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const TreeNode& n = nodes_[i];
    i = static_cast<std::size_t>(X(row, n.feature) <= n.threshold ? n.left : n.right);
  }
  return nodes_[i].value;
}

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

nlohmann::json DecisionTree::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : nodes_) {
    nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
  }
  return nodes;
}

DecisionTree DecisionTree::from_json(const nlohmann::json& j) {
  std::vector<TreeNode> nodes;
  for (const auto& n : j) {
    nodes.push_back(TreeNode{n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                             n.at(3).get<int>(), n.at(4).get<double>()});
  }
  if (nodes.empty()) throw DataError("tree: empty node list");
  return DecisionTree(std::move(nodes));
}

DecisionTree grow_tree(const Eigen::MatrixXd& X, std::span<const double> targets,
                       std::span<const double> weights, const TreeOptions& options, Rng* rng,
                       const LeafValueFn& leaf_value) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (targets.size() != n || weights.size() != n) throw ContractError("tree: length mismatch");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] > 0.0) rows.push_back(i);
  }
  if (rows.empty()) throw FitError("tree: no rows with positive weight");
  Grower grower(X, targets, weights, options, rng, leaf_value);
  return DecisionTree(grower.run(std::move(rows)));
}

}  // namespace fairgrid
