#include "fairgrid/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fairgrid/error.hpp"
#include "fairgrid/random.hpp"

namespace fairgrid {
namespace {

constexpr std::size_t kProtectedBlock = static_cast<std::size_t>(-1);

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

bool is_missing_token(const std::string& v) {
  return v.empty() || v == "?" || v == "NA" || v == "N/A" || v == "NaN" || v == "nan";
}

bool value_matches(const std::string& value, const std::string& wanted) {
  if (value == wanted) return true;
  const auto a = parse_double(value);
  const auto b = parse_double(wanted);
  return a && b && *a == *b;
}

}  // namespace

bool Column::missing(std::size_t row) const {
  return kind == ColumnKind::numeric ? std::isnan(numeric[row]) : categorical[row].empty();
}

Dataset::Dataset(std::vector<Column> features, std::vector<int> labels, std::vector<int> groups,
                 std::string label_name, std::string protected_name, bool keep_protected,
                 std::size_t dropped_rows)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      groups_(std::move(groups)),
      label_name_(std::move(label_name)),
      protected_name_(std::move(protected_name)),
      keep_protected_(keep_protected),
      dropped_rows_(dropped_rows) {
  const std::size_t n = labels_.size();
  if (groups_.size() != n) throw ContractError("dataset: label and group lengths differ");
  for (const auto& c : features_) {
    if (c.size() != n) throw ContractError(fmt::format("dataset: column '{}' has wrong length", c.name));
  }
  std::set<std::string> names{label_name_, protected_name_};
  if (names.size() != 2) throw SchemaError("dataset: label and protected column coincide");
  for (const auto& c : features_) {
    if (!names.insert(c.name).second) {
      throw SchemaError(fmt::format("dataset: duplicate column name '{}'", c.name));
    }
  }
  if (n < 2) throw DataError("dataset: need at least 2 rows");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if ((labels_[i] != 0 && labels_[i] != 1) || (groups_[i] != 0 && groups_[i] != 1)) {
      throw DataError("dataset: label and protected attribute must be binary");
    }
    positives += static_cast<std::size_t>(labels_[i]);
  }
  if (positives == 0 || positives == n) throw DataError("dataset: both label classes must be present");
}

double Dataset::positive_rate() const {
  double pos = 0;
  for (int y : labels_) pos += y;
  return pos / static_cast<double>(labels_.size());
}

double Dataset::label_spd() const {
  double pos[2] = {0, 0};
  double cnt[2] = {0, 0};
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    pos[groups_[i]] += labels_[i];
    cnt[groups_[i]] += 1;
  }
  if (cnt[0] == 0 || cnt[1] == 0) throw DataError("dataset: a protected group is empty");
  return pos[0] / cnt[0] - pos[1] / cnt[1];
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<Column> cols;
  cols.reserve(features_.size());
  for (const auto& c : features_) {
    Column out{c.name, c.kind, {}, {}};
    for (std::size_t r : rows) {
      if (c.kind == ColumnKind::numeric) {
        out.numeric.push_back(c.numeric.at(r));
      } else {
        out.categorical.push_back(c.categorical.at(r));
      }
    }
    cols.push_back(std::move(out));
  }
  std::vector<int> y, s;
  for (std::size_t r : rows) {
    y.push_back(labels_.at(r));
    s.push_back(groups_.at(r));
  }
  return Dataset(std::move(cols), std::move(y), std::move(s), label_name_, protected_name_,
                 keep_protected_, 0);
}

CsvTable Dataset::to_csv_table() const {
  CsvTable t;
  for (const auto& c : features_) t.header.push_back(c.name);
  t.header.push_back(protected_name_);
  t.header.push_back(label_name_);
  for (std::size_t i = 0; i < size(); ++i) {
    std::vector<std::string> row;
    for (const auto& c : features_) {
      if (c.kind == ColumnKind::numeric) {
        row.push_back(std::isnan(c.numeric[i]) ? "" : format_double(c.numeric[i]));
      } else {
        row.push_back(c.categorical[i]);
      }
    }
    row.push_back(groups_[i] ? "1" : "0");
    row.push_back(labels_[i] ? "1" : "0");
    t.rows.push_back(std::move(row));
  }
  return t;
}

Dataset dataset_from_table(const CsvTable& table, const DatasetSchema& schema) {
  const auto label_col = table.column(schema.label);
  if (!label_col) throw SchemaError(fmt::format("missing label column '{}'", schema.label));
  const auto prot_col = table.column(schema.protected_attribute);
  if (!prot_col) {
    throw SchemaError(fmt::format("missing protected column '{}'", schema.protected_attribute));
  }
  for (const auto& name : schema.categorical) {
    if (!table.column(name)) throw SchemaError(fmt::format("missing categorical column '{}'", name));
  }
  for (const auto& name : schema.drop) {
    if (!table.column(name)) throw SchemaError(fmt::format("missing dropped column '{}'", name));
  }

  // Keep rows whose label and protected value are present.
  std::vector<std::size_t> kept;
  std::set<std::string> label_values;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string y = trim(table.rows[r][*label_col]);
    const std::string s = trim(table.rows[r][*prot_col]);
    if (is_missing_token(y) || is_missing_token(s)) continue;
    kept.push_back(r);
    label_values.insert(y);
  }
  const std::size_t dropped = table.rows.size() - kept.size();
  if (label_values.size() > 2) {
    throw DataError(fmt::format("label column '{}' has {} distinct values; expected 2",
                                schema.label, label_values.size()));
  }

  std::vector<int> labels, groups;
  for (std::size_t r : kept) {
    labels.push_back(value_matches(trim(table.rows[r][*label_col]), schema.favorable) ? 1 : 0);
    groups.push_back(value_matches(trim(table.rows[r][*prot_col]), schema.privileged) ? 1 : 0);
  }

  std::vector<Column> features;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const std::string& name = table.header[c];
    if (c == *label_col || c == *prot_col) continue;
    if (std::find(schema.drop.begin(), schema.drop.end(), name) != schema.drop.end()) continue;
    std::vector<std::string> raw;
    raw.reserve(kept.size());
    for (std::size_t r : kept) {
      std::string v = trim(table.rows[r][c]);
      raw.push_back(is_missing_token(v) ? std::string() : std::move(v));
    }
    const bool forced = std::find(schema.categorical.begin(), schema.categorical.end(), name) !=
                        schema.categorical.end();
    bool numeric = !forced;
    std::vector<double> values;
    if (numeric) {
      values.reserve(raw.size());
      for (const auto& v : raw) {
        if (v.empty()) {
          values.push_back(std::nan(""));
          continue;
        }
        const auto parsed = parse_double(v);
        if (!parsed || !std::isfinite(*parsed)) {
          numeric = false;
          break;
        }
        values.push_back(*parsed);
      }
    }
    if (numeric) {
      features.push_back(Column{name, ColumnKind::numeric, std::move(values), {}});
    } else {
      features.push_back(Column{name, ColumnKind::categorical, {}, std::move(raw)});
    }
  }

  if (dropped > 0) {
    spdlog::info("dropped {} rows with missing label or protected value", dropped);
  }
  return Dataset(std::move(features), std::move(labels), std::move(groups), schema.label,
                 schema.protected_attribute, schema.keep_protected, dropped);
}

Dataset load_csv(const std::filesystem::path& path, const DatasetSchema& schema) {
  return dataset_from_table(read_csv(path), schema);
}

// ---------------------------------------------------------------------------
// Encoding

Encoder Encoder::fit(const Dataset& data, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ContractError("encoder: empty training partition");
  Encoder enc;
  const auto features = data.features();
  for (std::size_t c = 0; c < features.size(); ++c) {
    const Column& col = features[c];
    Block block;
    block.column = c;
    block.kind = col.kind;
    if (col.kind == ColumnKind::numeric) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t r : rows) {
        if (!std::isnan(col.numeric[r])) {
          sum += col.numeric[r];
          ++count;
        }
      }
      if (count == 0) {
        spdlog::warn("column '{}' has no values in the training rows; dropped", col.name);
        enc.dropped_.push_back(col.name);
        continue;
      }
      const double mean = sum / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t r : rows) {
        if (!std::isnan(col.numeric[r])) ss += (col.numeric[r] - mean) * (col.numeric[r] - mean);
      }
      const double sd = std::sqrt(ss / static_cast<double>(count));
      if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
        spdlog::warn("column '{}' is constant in the training rows; dropped", col.name);
        enc.dropped_.push_back(col.name);
        continue;
      }
      block.mean = mean;
      block.std = sd;
      enc.names_.push_back(col.name);
      enc.scaling_.push_back({mean, sd});
    } else {
      std::map<std::string, std::size_t> counts;
      for (std::size_t r : rows) {
        if (!col.categorical[r].empty()) ++counts[col.categorical[r]];
      }
      if (counts.size() < 2) {
        spdlog::warn("column '{}' has fewer than two levels in the training rows; dropped",
                     col.name);
        enc.dropped_.push_back(col.name);
        continue;
      }
      std::size_t best = 0;
      for (const auto& [level, n] : counts) {
        block.levels.push_back(level);
        if (n > best) {  // ties keep the lexicographically smallest level
          best = n;
          block.mode = level;
        }
      }
      for (const auto& level : block.levels) {
        enc.names_.push_back(col.name + "=" + level);
        enc.scaling_.push_back({0.0, 1.0});
      }
    }
    enc.blocks_.push_back(std::move(block));
  }
  if (data.keep_protected()) {
    std::size_t priv = 0;
    for (std::size_t r : rows) priv += static_cast<std::size_t>(data.groups()[r]);
    if (priv == 0 || priv == rows.size()) {
      spdlog::warn("protected attribute is constant in the training rows; not used as a feature");
      enc.dropped_.push_back(data.protected_name());
    } else {
      Block block;
      block.column = kProtectedBlock;
      enc.blocks_.push_back(block);
      enc.names_.push_back(data.protected_name());
      enc.scaling_.push_back({0.0, 1.0});
    }
  }
  return enc;
}

Encoder Encoder::fit(const Dataset& data) {
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return fit(data, rows);
}

FeatureMatrix Encoder::transform(const Dataset& data, std::span<const std::size_t> rows) const {
  FeatureMatrix fm;
  fm.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()),
                                    static_cast<Eigen::Index>(names_.size()));
  fm.feature_names = names_;
  fm.scaling = scaling_;
  const auto features = data.features();
  Eigen::Index out = 0;
  for (const Block& block : blocks_) {
    if (block.column == kProtectedBlock) {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        fm.values(static_cast<Eigen::Index>(i), out) = data.groups()[rows[i]];
      }
      ++out;
      continue;
    }
    if (block.column >= features.size()) throw ContractError("encoder: dataset layout changed");
    const Column& col = features[block.column];
    if (col.kind != block.kind) throw ContractError("encoder: column kind changed");
    if (block.kind == ColumnKind::numeric) {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        double v = col.numeric[rows[i]];
        if (std::isnan(v)) v = block.mean;
        fm.values(static_cast<Eigen::Index>(i), out) = (v - block.mean) / block.std;
      }
      ++out;
    } else {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::string& raw = col.categorical[rows[i]];
        const std::string& v = raw.empty() ? block.mode : raw;
        const auto it = std::lower_bound(block.levels.begin(), block.levels.end(), v);
        // Levels unseen in training leave the whole block at zero.
        if (it != block.levels.end() && *it == v) {
          fm.values(static_cast<Eigen::Index>(i), out + (it - block.levels.begin())) = 1.0;
        }
      }
      out += static_cast<Eigen::Index>(block.levels.size());
    }
  }
  return fm;
}

FeatureMatrix Encoder::transform(const Dataset& data) const {
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return transform(data, rows);
}

nlohmann::json Encoder::to_json() const {
  nlohmann::json blocks = nlohmann::json::array();
  std::size_t name_index = 0;
  for (const Block& b : blocks_) {
    nlohmann::json j;
    if (b.column == kProtectedBlock) {
      j["kind"] = "protected";
      j["name"] = names_[name_index++];
    } else if (b.kind == ColumnKind::numeric) {
      j["kind"] = "numeric";
      j["name"] = names_[name_index++];
      j["mean"] = b.mean;
      j["std"] = b.std;
    } else {
      j["kind"] = "categorical";
      j["levels"] = b.levels;
      j["mode"] = b.mode;
      name_index += b.levels.size();
    }
    blocks.push_back(std::move(j));
  }
  return {{"features", names_}, {"blocks", blocks}, {"dropped", dropped_}};
}

FeatureMatrix encode(const Dataset& data) { return Encoder::fit(data).transform(data); }

// ---------------------------------------------------------------------------
// Folds

std::vector<std::size_t> FoldPlan::train_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != fold) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> FoldPlan::test_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == fold) rows.push_back(i);
  }
  return rows;
}

FoldPlan stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError(fmt::format("cv k must be >= 2, got {}", k));
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  const auto kk = static_cast<std::size_t>(k);
  if (pos.size() < kk || neg.size() < kk) {
    throw ConfigError(fmt::format("cv k={} exceeds the smaller class count ({})", k,
                                  std::min(pos.size(), neg.size())));
  }
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(pos));
  rng.shuffle(std::span<std::size_t>(neg));
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignment.assign(labels.size(), 0);
  std::size_t next = 0;
  for (std::size_t i : pos) plan.assignment[i] = static_cast<int>(next++ % kk);
  for (std::size_t i : neg) plan.assignment[i] = static_cast<int>(next++ % kk);
  return plan;
}

FoldPlan stratified_kfold(const Dataset& data, int k, std::uint64_t seed) {
  return stratified_kfold(data.labels(), k, seed);
}

// ---------------------------------------------------------------------------
// Synthetic fixture

Dataset synth_biased(std::size_t n, double spd_target, double base_rate, std::uint64_t seed) {
  if (n < 20) throw ConfigError(fmt::format("synth_biased: n must be >= 20, got {}", n));
  if (!(base_rate > 0.0 && base_rate < 1.0)) {
    throw ConfigError("synth_biased: base_rate must lie in (0, 1)");
  }
  if (!(std::abs(spd_target) <= std::min(base_rate, 1.0 - base_rate))) {
    throw ConfigError(fmt::format("synth_biased: |spd_target|={} is infeasible for base_rate={}",
                                  std::abs(spd_target), base_rate));
  }
  Rng rng(seed);
  const std::size_t n_priv = n / 2;
  const std::size_t n_unpriv = n - n_priv;
  const double rate_unpriv = base_rate + spd_target / 2.0;
  const double rate_priv = base_rate - spd_target / 2.0;
  const auto pos_unpriv = static_cast<std::size_t>(std::llround(rate_unpriv * static_cast<double>(n_unpriv)));
  const auto pos_priv = static_cast<std::size_t>(std::llround(rate_priv * static_cast<double>(n_priv)));

  std::vector<int> y, s;
  for (std::size_t i = 0; i < n_unpriv; ++i) {
    s.push_back(0);
    y.push_back(i < pos_unpriv ? 1 : 0);
  }
  for (std::size_t i = 0; i < n_priv; ++i) {
    s.push_back(1);
    y.push_back(i < pos_priv ? 1 : 0);
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));

  Column x1{"x1", ColumnKind::numeric, {}, {}};
  Column x2{"x2", ColumnKind::numeric, {}, {}};
  Column segment{"segment", ColumnKind::categorical, {}, {}};
  std::vector<int> labels, groups;
  static const char* kSegments[] = {"a", "b", "c"};
  for (std::size_t idx : order) {
    const int yi = y[idx];
    const int si = s[idx];
    labels.push_back(yi);
    groups.push_back(si);
    x1.numeric.push_back(1.5 * yi + rng.normal());
    x2.numeric.push_back(1.0 * yi + 0.5 * si + rng.normal());
    segment.categorical.emplace_back(kSegments[rng.index(3)]);
  }
  std::vector<Column> cols;
  cols.push_back(std::move(x1));
  cols.push_back(std::move(x2));
  cols.push_back(std::move(segment));
  return Dataset(std::move(cols), std::move(labels), std::move(groups), "label", "group", true, 0);
}

}  // namespace fairgrid
