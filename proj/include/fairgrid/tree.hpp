#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fairgrid/random.hpp"

namespace fairgrid {

enum class SplitCriterion { gini, entropy, squared_error };

struct TreeOptions {
  SplitCriterion criterion = SplitCriterion::gini;
  int max_depth = -1;  // -1 = unlimited
  std::size_t min_samples_leaf = 1;
  std::size_t max_features = 0;  // 0 = every feature at every split
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

// Binary tree over dense features; rows with x[feature] <= threshold go left.
class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  double predict(const Eigen::MatrixXd& X, Eigen::Index row) const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t leaf_count() const;

  nlohmann::json to_json() const;
  static DecisionTree from_json(const nlohmann::json& j);

 private:
  std::vector<TreeNode> nodes_;
};

// Computes a leaf value from the rows that reached it.
using LeafValueFn = std::function<double(std::span<const std::size_t> rows)>;

// CART growth. For gini/entropy the targets must be 0/1 and leaves hold the
// weighted positive fraction unless leaf_value is supplied; for
// squared_error leaves default to the weighted target mean. Rows with zero
// weight are ignored. Split ties resolve to the lowest feature index, then
// the lowest threshold. `rng` is needed only when max_features > 0.
DecisionTree grow_tree(const Eigen::MatrixXd& X, std::span<const double> targets,
                       std::span<const double> weights, const TreeOptions& options,
                       Rng* rng = nullptr, const LeafValueFn& leaf_value = {});

}  // namespace fairgrid
