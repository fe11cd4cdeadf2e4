#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fairgrid/csv.hpp"

namespace fairgrid {

enum class ColumnKind { numeric, categorical };

// One feature column. Missing numeric cells hold NaN, missing categorical
// cells hold the empty string.
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<double> numeric;
  std::vector<std::string> categorical;

  std::size_t size() const {
    return kind == ColumnKind::numeric ? numeric.size() : categorical.size();
  }
  bool missing(std::size_t row) const;
};

// How to read a raw table: which column is the label and which is the
// protected attribute, and which raw values count as favorable/privileged.
struct DatasetSchema {
  std::string label;
  std::string favorable;
  std::string protected_attribute;
  std::string privileged;
  // Columns forced to categorical. Other columns are numeric when every
  // present value parses as a number, categorical otherwise.
  std::vector<std::string> categorical;
  // Columns ignored entirely.
  std::vector<std::string> drop;
  bool keep_protected = true;
};

// Immutable binary-classification frame. Labels are 1 for the favorable
// outcome; groups are 1 for the privileged group.
class Dataset {
 public:
  Dataset(std::vector<Column> features, std::vector<int> labels, std::vector<int> groups,
          std::string label_name, std::string protected_name, bool keep_protected = true,
          std::size_t dropped_rows = 0);

  std::size_t size() const { return labels_.size(); }
  std::span<const Column> features() const { return features_; }
  std::span<const int> labels() const { return labels_; }
  std::span<const int> groups() const { return groups_; }
  const std::string& label_name() const { return label_name_; }
  const std::string& protected_name() const { return protected_name_; }
  bool keep_protected() const { return keep_protected_; }
  // Rows removed at load time because the label or protected value was missing.
  std::size_t dropped_rows() const { return dropped_rows_; }

  double positive_rate() const;
  // Empirical label SPD: P(y=1 | unprivileged) - P(y=1 | privileged).
  double label_spd() const;

  Dataset subset(std::span<const std::size_t> rows) const;

  // Raw table with label/protected written as 1/0; reloads with
  // favorable = privileged = "1".
  CsvTable to_csv_table() const;

 private:
  std::vector<Column> features_;
  std::vector<int> labels_;
  std::vector<int> groups_;
  std::string label_name_;
  std::string protected_name_;
  bool keep_protected_;
  std::size_t dropped_rows_;
};

Dataset load_csv(const std::filesystem::path& path, const DatasetSchema& schema);
Dataset dataset_from_table(const CsvTable& table, const DatasetSchema& schema);

struct FeatureScaling {
  double mean = 0.0;
  double std = 1.0;
};

// Dense design matrix, rows x d.
struct FeatureMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> feature_names;
  // Standardization applied to each output column; (0, 1) for indicators.
  std::vector<FeatureScaling> scaling;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
};

// Column-wise encoding learned from a training partition: numeric columns
// are mean-imputed and standardized (population std), categorical columns
// are mode-imputed and one-hot encoded over their sorted training levels.
// Constant columns are dropped. The protected attribute, when kept, is
// appended last as a 0/1 numeric column.
class Encoder {
 public:
  static Encoder fit(const Dataset& data, std::span<const std::size_t> rows);
  static Encoder fit(const Dataset& data);

  FeatureMatrix transform(const Dataset& data, std::span<const std::size_t> rows) const;
  FeatureMatrix transform(const Dataset& data) const;

  std::size_t width() const { return names_.size(); }
  const std::vector<std::string>& feature_names() const { return names_; }
  const std::vector<std::string>& dropped_columns() const { return dropped_; }

  nlohmann::json to_json() const;

 private:
  struct Block {
    std::size_t column = 0;  // index into Dataset::features(); npos = protected
    ColumnKind kind = ColumnKind::numeric;
    double mean = 0.0;
    double std = 1.0;
    std::vector<std::string> levels;
    std::string mode;
  };
  std::vector<Block> blocks_;
  std::vector<std::string> names_;
  std::vector<FeatureScaling> scaling_;
  std::vector<std::string> dropped_;
};

// Fits on all rows and transforms all rows.
FeatureMatrix encode(const Dataset& data);

struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<int> assignment;  // per row, in [0, k)

  std::vector<std::size_t> train_rows(int fold) const;
  std::vector<std::size_t> test_rows(int fold) const;
};

// Rows of each class are shuffled and dealt round-robin; the negative class
// continues dealing where the positive class stopped so fold sizes differ
// by at most one.
FoldPlan stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed);
FoldPlan stratified_kfold(const Dataset& data, int k, std::uint64_t seed);

// Synthetic biased dataset: equal-size groups, per-group favorable rates
// base_rate -/+ spd_target/2, two label-informative numeric features (x1,
// and x2 which also leaks the group), one uninformative categorical column.
Dataset synth_biased(std::size_t n, double spd_target, double base_rate, std::uint64_t seed);

}  // namespace fairgrid
