#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include <gtest/gtest.h>

#include "fairgrid/data.hpp"
#include "fairgrid/error.hpp"
#include "fairgrid/random.hpp"

using namespace fairgrid;

namespace {

DatasetSchema schema_y() {
  DatasetSchema s;
  s.label = "y";
  s.favorable = "good";
  s.protected_attribute = "sex";
  s.privileged = "m";
  return s;
}

}  // namespace

TEST(Load, MapsLabelAndProtected) {
  const CsvTable t = parse_csv("age,sex,y\n30,m,good\n40,f,bad\n50,f,good\n20,m,bad\n");
  const Dataset d = dataset_from_table(t, schema_y());
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(std::vector<int>(d.labels().begin(), d.labels().end()), (std::vector<int>{1, 0, 1, 0}));
  EXPECT_EQ(std::vector<int>(d.groups().begin(), d.groups().end()), (std::vector<int>{1, 0, 0, 1}));
  EXPECT_EQ(d.dropped_rows(), 0u);
}

TEST(Load, DropsRowsWithMissingLabelOrProtected) {
  const CsvTable t = parse_csv("age,sex,y\n30,m,good\n40,,bad\n50,f,\n20,m,bad\n25,f,good\n");
  const Dataset d = dataset_from_table(t, schema_y());
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.dropped_rows(), 2u);
  EXPECT_EQ(encode(d).rows(), 3u);
}

TEST(Load, MissingProtectedColumnIsSchemaError) {
  const CsvTable t = parse_csv("age,y\n30,good\n40,bad\n");
  try {
    dataset_from_table(t, schema_y());
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("sex"), std::string::npos);
  }
}

TEST(Load, NonBinaryLabelIsDataError) {
  const CsvTable t = parse_csv("sex,y\nm,good\nf,bad\nm,meh\n");
  EXPECT_THROW(dataset_from_table(t, schema_y()), DataError);
}

TEST(Load, SingleClassIsDataError) {
  const CsvTable t = parse_csv("sex,y\nm,good\nf,good\n");
  EXPECT_THROW(dataset_from_table(t, schema_y()), DataError);
}

TEST(Encode, StandardizesWithPopulationStd) {
  const CsvTable t = parse_csv("x,sex,y\n1,m,good\n2,f,bad\n3,m,bad\n");
  DatasetSchema s = schema_y();
  s.keep_protected = false;
  const FeatureMatrix m = encode(dataset_from_table(t, s));
  ASSERT_EQ(m.cols(), 1u);
  EXPECT_NEAR(m.values(0, 0), -1.224744871391589, 1e-12);
  EXPECT_NEAR(m.values(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(m.values(2, 0), 1.224744871391589, 1e-12);
}

TEST(Encode, OneHotSortedLevelsAndDropsConstants) {
  const CsvTable t = parse_csv("c,k,sex,y\nb,7,m,good\na,7,f,bad\nc,7,m,bad\na,7,f,good\n");
  const FeatureMatrix m = encode(dataset_from_table(t, schema_y()));
  ASSERT_EQ(m.feature_names.size(), 4u);
  EXPECT_EQ(m.feature_names.back(), "sex");
  for (Eigen::Index r = 0; r < 4; ++r) EXPECT_DOUBLE_EQ(m.values.row(r).head(3).sum(), 1.0);
  EXPECT_DOUBLE_EQ(m.values(1, 0), 1.0);  // level "a" first
  EXPECT_DOUBLE_EQ(m.values(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(m.values(2, 2), 1.0);
}

TEST(Encode, ImputesAndMapsUnseenLevelsToZeros) {
  const CsvTable t = parse_csv("x,c,sex,y\n1,a,m,good\n,b,f,bad\n3,a,m,bad\n5,z,f,good\n");
  DatasetSchema s = schema_y();
  s.keep_protected = false;
  const Dataset d = dataset_from_table(t, s);
  const std::vector<std::size_t> train{0, 1, 2};
  const std::vector<std::size_t> test{3};
  const Encoder enc = Encoder::fit(d, train);
  const FeatureMatrix tr = enc.transform(d, train);
  EXPECT_NEAR(tr.values(1, 0), 0.0, 1e-12);  // mean-imputed
  const FeatureMatrix te = enc.transform(d, test);
  EXPECT_DOUBLE_EQ(te.values.row(0).tail(2).sum(), 0.0);
}

TEST(Encode, IsPure) {
  const Dataset d = synth_biased(300, -0.2, 0.5, 5);
  const FeatureMatrix a = encode(d);
  const FeatureMatrix b = encode(d);
  ASSERT_EQ(a.values.rows(), b.values.rows());
  EXPECT_EQ(std::memcmp(a.values.data(), b.values.data(), sizeof(double) * a.values.size()), 0);
  EXPECT_TRUE(a.values.allFinite());
}

TEST(Folds, DivisibleStratification) {
  std::vector<int> y(100, 0);
  std::fill(y.begin(), y.begin() + 30, 1);
  const FoldPlan p = stratified_kfold(y, 5, 3);
  for (int f = 0; f < 5; ++f) {
    const auto rows = p.test_rows(f);
    EXPECT_EQ(rows.size(), 20u);
    int pos = 0;
    for (auto r : rows) pos += y[r];
    EXPECT_EQ(pos, 6);
  }
  EXPECT_EQ(stratified_kfold(y, 5, 3).assignment, p.assignment);
}

TEST(Folds, SmallUnevenPlan) {
  std::vector<int> y{1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0};
  const FoldPlan p = stratified_kfold(y, 5, 9);
  std::vector<int> pos, size;
  for (int f = 0; f < 5; ++f) {
    int c = 0;
    for (auto r : p.test_rows(f)) c += y[r];
    pos.push_back(c);
    size.push_back(static_cast<int>(p.test_rows(f).size()));
  }
  for (int c : pos) EXPECT_EQ(c, 1);
  EXPECT_LE(*std::max_element(size.begin(), size.end()) - *std::min_element(size.begin(), size.end()), 1);
  // three positives cannot cover five folds
  std::vector<int> few{1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_THROW(stratified_kfold(few, 5, 9), ConfigError);
}

TEST(Folds, RejectsTooFewMembers) {
  std::vector<int> y{1, 1, 0, 0, 0, 0};
  EXPECT_THROW(stratified_kfold(y, 3, 1), ConfigError);
  EXPECT_THROW(stratified_kfold(y, 1, 1), ConfigError);
}

// Partition and per-fold positive-rate bound over random label vectors.
TEST(Folds, PartitionAndStratificationProperty) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 20 + rng.index(200);
    const int k = 2 + static_cast<int>(rng.index(9));
    std::vector<int> y(n);
    std::size_t pos = 0;
    for (auto& v : y) pos += (v = rng.bernoulli(0.3) ? 1 : 0);
    if (pos < static_cast<std::size_t>(k) || n - pos < static_cast<std::size_t>(k)) continue;
    const FoldPlan p = stratified_kfold(y, k, trial);
    std::vector<int> seen(n, 0);
    const double global = static_cast<double>(pos) / static_cast<double>(n);
    for (int f = 0; f < k; ++f) {
      const auto rows = p.test_rows(f);
      double fp = 0;
      for (auto r : rows) {
        ++seen[r];
        fp += y[r];
      }
      EXPECT_LE(std::abs(fp / static_cast<double>(rows.size()) - global), 1.0 / static_cast<double>(rows.size()) + 1e-12);
      EXPECT_EQ(p.train_rows(f).size() + rows.size(), n);
    }
    for (int s : seen) ASSERT_EQ(s, 1);
  }
}

TEST(Synth, HitsTargetSpd) {
  EXPECT_NEAR(synth_biased(1000, 0.0, 0.5, 42).label_spd(), 0.0, 0.05);
  const double spd = synth_biased(2000, -0.2, 0.5, 42).label_spd();
  EXPECT_GE(spd, -0.25);
  EXPECT_LE(spd, -0.15);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_NEAR(synth_biased(600, -0.3, 0.4, seed).label_spd(), -0.3, 0.05);
  }
}

TEST(Synth, RejectsBadArguments) {
  EXPECT_THROW(synth_biased(10, 0.0, 0.5, 1), ConfigError);
  EXPECT_THROW(synth_biased(100, 0.7, 0.5, 1), ConfigError);
  EXPECT_THROW(synth_biased(100, 0.0, 1.0, 1), ConfigError);
}

TEST(Dataset, CsvTableReloads) {
  const Dataset d = synth_biased(200, -0.2, 0.5, 3);
  DatasetSchema s;
  s.label = d.label_name();
  s.protected_attribute = d.protected_name();
  s.favorable = s.privileged = "1";
  const Dataset back = dataset_from_table(d.to_csv_table(), s);
  EXPECT_EQ(std::vector<int>(back.labels().begin(), back.labels().end()),
            std::vector<int>(d.labels().begin(), d.labels().end()));
  const FeatureMatrix a = encode(d), b = encode(back);
  EXPECT_TRUE(a.values.isApprox(b.values, 1e-12));
}
