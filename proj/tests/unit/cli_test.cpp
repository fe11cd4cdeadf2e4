#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fairgrid/cli.hpp"
#include "fairgrid/config.hpp"
#include "fairgrid/error.hpp"
#include "fairgrid/results.hpp"

using namespace fairgrid;
namespace fs = std::filesystem;

namespace {

class Workdir : public ::testing::Test {
 protected:
  void SetUp() override {
    ::unsetenv(kOutputDirEnv);
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / "fairgrid_cli_test" / (std::string(info->test_suite_name()) + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { ::unsetenv(kOutputDirEnv); }

  fs::path write(const std::string& name, const std::string& text) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  std::string desk_config(const std::string& out) const {
    return "data:\n"
           "  synthetic: {n: 300, spd: -0.3, base_rate: 0.5, seed: 42}\n"
           "grid:\n"
           "  bases:\n"
           "    - kind: LR\n"
           "      params: {C: [0.1, 1.0]}\n"
           "    - kind: GNB\n"
           "  thresholds: [0.3, 0.5, 0.7]\n"
           "  mitigations: [NONE, RW, ROC, RW_ROC]\n"
           "cv: {k: 3, seed: 5}\n"
           "run: {jobs: 2, output_dir: " + (dir_ / out).string() + "}\n";
  }

  fs::path dir_;
};

const char* kMinimal =
    "data: {synthetic: {n: 100}}\n"
    "grid: {bases: [LR], thresholds: [0.5]}\n";

}  // namespace

TEST(Config, ParsesSectionsAndDefaults) {
  const RunConfig c = parse_run_config(
      "data:\n"
      "  path: data.csv\n"
      "  label: y\n"
      "  favorable: good\n"
      "  protected: sex\n"
      "  privileged: m\n"
      "  categorical: [job]\n"
      "  keep_protected: false\n"
      "grid:\n"
      "  bases:\n"
      "    - kind: RF\n"
      "      params: {n_estimators: [10, 20], criterion: [gini, entropy]}\n"
      "    - kind: LR\n"
      "      param_maps: [{C: 1.0}, {C: 0.5, solver: saga}]\n"
      "  thresholds: [0.4, 0.6]\n"
      "  mitigations: [NONE, EGR]\n"
      "  mitigation_params:\n"
      "    egr: {constraint: equalized_odds, rounds: 7}\n"
      "    roc: {bands: [0.0, 0.1]}\n"
      "    ceo: {cost: fpr}\n"
      "cv: {k: 4, seed: 9}\n"
      "criterion: {acc_metric: ACC, fair_metric: EOD, alpha: 2, beta: 0.5}\n"
      "run: {jobs: 3}\n"
      "metrics: {cns_neighbors: 7, gei_alpha: 3}\n",
      "/base");
  EXPECT_EQ(c.data.path, fs::path("/base/data.csv"));
  EXPECT_EQ(c.data.schema.label, "y");
  EXPECT_EQ(c.data.schema.categorical, std::vector<std::string>{"job"});
  EXPECT_FALSE(c.data.schema.keep_protected);
  ASSERT_EQ(c.grid.bases.size(), 2u);
  EXPECT_EQ(c.grid.bases[0].param_maps.size(), 4u);
  EXPECT_EQ(c.grid.bases[1].param_maps[1].at("solver"), ParamValue(std::string("saga")));
  EXPECT_EQ(c.grid.mitigation.egr.constraint, EgrConstraint::equalized_odds);
  EXPECT_EQ(c.grid.mitigation.egr.rounds, 7);
  EXPECT_EQ(c.grid.mitigation.roc_bands, (std::vector<double>{0.0, 0.1}));
  EXPECT_EQ(c.grid.mitigation.ceo_cost, CeoCost::fpr);
  EXPECT_EQ(c.grid.cv_k, 4);
  EXPECT_EQ(c.grid.seed, 9u);
  EXPECT_EQ(c.grid.criterion.fair_metric, MetricId::EOD);
  EXPECT_EQ(c.grid.criterion.alpha, 2.0);
  EXPECT_EQ(c.run.jobs, 3u);
  EXPECT_EQ(c.grid.mitigation.cns_neighbors, 7u);
  EXPECT_EQ(c.grid.mitigation.gei_alpha, 3.0);

  const RunConfig d = parse_run_config(kMinimal);
  EXPECT_EQ(d.grid.cv_k, 10);
  EXPECT_EQ(d.grid.mitigations, std::vector<MitigationId>{MitigationId::NONE});
  EXPECT_EQ(d.grid.criterion.acc_metric, MetricId::NORM_MCC);
  EXPECT_EQ(d.grid.criterion.fair_metric, MetricId::SPD);
}

TEST(Config, JsonIsAccepted) {
  const RunConfig c = parse_run_config(
      R"({"data": {"synthetic": {"n": 50}}, "grid": {"bases": ["GNB"], "thresholds": [0.5], "mitigations": ["RW"]}})");
  EXPECT_EQ(c.data.synthetic->n, 50u);
  EXPECT_EQ(c.grid.mitigations, std::vector<MitigationId>{MitigationId::RW});
}

TEST(Config, ErrorsNameTheKey) {
  auto message = [](const std::string& text, std::vector<std::string> sets = {}) {
    try {
      parse_run_config(text, {}, sets);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("<no error>");
  };
  EXPECT_NE(message(std::string(kMinimal) + "cv: {k: 3, folds: 2}\n").find("cv.folds"), std::string::npos);
  EXPECT_NE(message(std::string(kMinimal) + "extra: 1\n").find("extra"), std::string::npos);
  EXPECT_NE(message("data: {synthetic: {n: 100}}\ngrid: {bases: [LR], thresholds: [1.5]}\n").find("grid.thresholds"),
            std::string::npos);
  EXPECT_NE(message(kMinimal, {"criterion.fair_metric=ACC"}).find("fair_metric"), std::string::npos);
  EXPECT_NE(message("grid: {bases: [LR], thresholds: [0.5]}\n").find("data"), std::string::npos);
  EXPECT_NE(message("data: {synthetic: {n: 100}}\ngrid: {bases: [XGB], thresholds: [0.5]}\n").find("grid.bases"),
            std::string::npos);
  EXPECT_NE(message(kMinimal, {"nonsense"}).find("--set"), std::string::npos);
}

TEST(Config, OverridesApplyBeforeValidation) {
  const RunConfig c = parse_run_config(kMinimal, {}, {"cv.k=3", "grid.thresholds=[0.2, 0.8]", "criterion.beta=0"});
  EXPECT_EQ(c.grid.cv_k, 3);
  EXPECT_EQ(c.grid.thresholds, (std::vector<double>{0.2, 0.8}));
  EXPECT_EQ(c.grid.criterion.beta, 0.0);
}

TEST(Config, EchoParsesBackToSameConfig) {
  const RunConfig c = parse_run_config(
      "data: {synthetic: {n: 120, spd: -0.1, seed: 3}}\n"
      "grid:\n"
      "  bases: [{kind: GB, params: {n_estimators: [5], max_depth: [2, 3]}}]\n"
      "  thresholds: [0.5]\n"
      "  mitigations: [NONE, CEO]\n"
      "  mitigation_params: {ceo: {cost: weighted}}\n"
      "cv: {k: 3}\n");
  const nlohmann::json echo = c.to_json();
  const RunConfig back = parse_run_config(echo.dump());
  EXPECT_EQ(back.to_json(), echo);
  nlohmann::json manifest = {{"fairgrid_version", "x"}, {"config", echo}, {"seed", 0}};
  EXPECT_EQ(parse_run_config(manifest.dump()).to_json(), echo);
}

TEST_F(Workdir, RunWritesArtifactsAndReplays) {
  const fs::path cfg = write("cfg.yaml", desk_config("out"));
  ASSERT_EQ(cmd_run({cfg, {}, std::nullopt}), kExitOk);
  for (const char* f : {"results.csv", "best_model.json", "run_manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  }
  const ResultTable t = read_results(dir_ / "out" / "results.csv");
  EXPECT_EQ(t.size(), 36u);
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "out" / "run_manifest.json"));
  EXPECT_EQ(manifest.at("cells"), 36);
  EXPECT_TRUE(manifest.contains("wall_time_seconds"));
  EXPECT_EQ(manifest.at("seed"), 5);

  // replay the manifest into another directory with a different worker count
  ::setenv(kOutputDirEnv, (dir_ / "replay").string().c_str(), 1);
  ASSERT_EQ(cmd_run({dir_ / "out" / "run_manifest.json", {}, 1u}), kExitOk);
  EXPECT_EQ(slurp(dir_ / "replay" / "results.csv"), slurp(dir_ / "out" / "results.csv"));
  EXPECT_FALSE(fs::exists(dir_ / "out" / "replay"));
}

TEST_F(Workdir, RunExitCodes) {
  const fs::path bad_tau = write("tau.yaml", "data: {synthetic: {n: 100}}\ngrid: {bases: [LR], thresholds: [1.5]}\n");
  EXPECT_EQ(cmd_run({bad_tau, {}, std::nullopt}), kExitConfig);
  EXPECT_EQ(cmd_run({dir_ / "missing.yaml", {}, std::nullopt}), kExitConfig);

  const fs::path no_data = write("nodata.yaml",
                                 "data: {path: nope.csv, label: y, favorable: '1', protected: g, privileged: '1'}\n"
                                 "grid: {bases: [LR], thresholds: [0.5]}\n");
  EXPECT_EQ(cmd_run({no_data, {}, std::nullopt}), kExitData);

  std::string csv = "x,g,y\n";
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    csv += format_double(rng.normal()) + "," + std::to_string(rng.bernoulli(0.5)) + "," + std::to_string(i % 2) + "\n";
  }
  write("noise.csv", csv);
  const fs::path ppvd = write("ppvd.yaml",
                              "data: {path: noise.csv, label: y, favorable: '1', protected: g, privileged: '1'}\n"
                              "grid: {bases: [LR], thresholds: [0.99]}\n"
                              "cv: {k: 4}\n"
                              "criterion: {fair_metric: PPVD}\n"
                              "run: {output_dir: " + (dir_ / "ppvd_out").string() + "}\n");
  EXPECT_EQ(cmd_run({ppvd, {}, std::nullopt}), kExitNoSelection);
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "ppvd_out" / "run_manifest.json"));
  EXPECT_TRUE(manifest.at("best_cell_id").is_null());
  EXPECT_FALSE(fs::exists(dir_ / "ppvd_out" / "best_model.json"));

  const fs::path k_big = write("k.yaml", std::string(kMinimal) + "cv: {k: 80}\n");
  EXPECT_EQ(cmd_run({k_big, {}, std::nullopt}), kExitConfig);
  const fs::path svm = write("svm.yaml", "data: {synthetic: {n: 100}}\ngrid: {bases: [SVM], thresholds: [0.5]}\n");
  EXPECT_EQ(cmd_run({svm, {}, std::nullopt}), kExitConfig);
}

TEST_F(Workdir, ReportEmitsTablesAndTop) {
  const fs::path cfg = write("cfg.yaml", desk_config("out"));
  ASSERT_EQ(cmd_run({cfg, {}, std::nullopt}), kExitOk);
  ReportCommand rc;
  rc.results = dir_ / "out" / "results.csv";
  rc.top = 3;
  rc.output_dir = dir_ / "report";
  ASSERT_EQ(cmd_report(rc), kExitOk);
  for (const char* f : {"corr_acc.csv", "corr_fair.csv", "corr_acc_stars.csv", "corr_fair_pvalues.csv", "corr_acc_n.csv",
                        "bm_effects.csv", "bm_effects_summary.csv", "top.csv"}) {
    ASSERT_TRUE(fs::exists(dir_ / "report" / f)) << f;
    EXPECT_NO_THROW(read_csv(dir_ / "report" / f)) << f;
  }
  const ResultTable top = read_results(dir_ / "report" / "top.csv");
  ASSERT_EQ(top.size(), 3u);
  EXPECT_LE(*top[0].cost, *top[1].cost);
  EXPECT_LE(*top[1].cost, *top[2].cost);
  double min_cost = INFINITY;
  for (const auto& r : read_results(rc.results)) min_cost = std::min(min_cost, *r.cost);
  EXPECT_EQ(*top[0].cost, min_cost);
  EXPECT_FALSE(read_csv(dir_ / "report" / "bm_effects.csv").rows.empty());

  const CsvTable corr = read_csv(dir_ / "report" / "corr_acc.csv");
  EXPECT_EQ(corr.rows.size(), 6u);

  rc.top = 0;
  EXPECT_EQ(cmd_report(rc), kExitConfig);
}

TEST_F(Workdir, ReportOnNoneOnlyTable) {
  std::string text = desk_config("out");
  const fs::path cfg = write("cfg.yaml", text);
  ASSERT_EQ(cmd_run({cfg, {"grid.mitigations=[NONE]"}, std::nullopt}), kExitOk);
  ReportCommand rc;
  rc.results = dir_ / "out" / "results.csv";
  ASSERT_EQ(cmd_report(rc), kExitOk);
  const CsvTable effects = read_csv(dir_ / "out" / "bm_effects.csv");
  EXPECT_FALSE(effects.header.empty());
  EXPECT_TRUE(effects.rows.empty());
}

TEST_F(Workdir, ReportRejectsMalformedResults) {
  ReportCommand rc;
  rc.results = write("bad.csv", "cell_id,base\nabc,LR\n");
  EXPECT_EQ(cmd_report(rc), kExitData);
  rc.results = dir_ / "absent.csv";
  EXPECT_EQ(cmd_report(rc), kExitData);
}

TEST(Results, CsvRoundTrip) {
  const Dataset d = synth_biased(200, -0.3, 0.5, 4);
  GridConfig g;
  g.bases = {{BaseKind::GNB, {{}}}};
  g.thresholds = {0.4, 0.6};
  g.mitigations = {MitigationId::NONE, MitigationId::CEO};
  g.cv_k = 3;
  const ResultTable t = to_result_table(run(g, d, {1}).records);
  const CsvTable csv = result_csv(t);
  EXPECT_EQ(csv.header, result_header());
  EXPECT_EQ(csv.header[0], "cell_id");
  EXPECT_EQ(csv.header[5], "ACC_mean");
  EXPECT_EQ(csv.header[6], "ACC_std");
  std::ostringstream a;
  write_csv(a, csv);
  const ResultTable back = parse_results(parse_csv(a.str()));
  std::ostringstream b;
  write_csv(b, result_csv(back));
  EXPECT_EQ(a.str(), b.str());
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(back[i].cost, t[i].cost);
    EXPECT_EQ(back[i].folds_of(MetricId::SPD), t[i].folds_of(MetricId::SPD));
  }
}

TEST(Results, ParseErrors) {
  CsvTable csv = result_csv({});
  csv.rows.push_back(std::vector<std::string>(csv.header.size(), ""));
  csv.rows[0][0] = "x";
  for (std::size_t i = 0; i < csv.header.size(); ++i) {
    if (csv.header[i].ends_with("_undef")) csv.rows[0][i] = "0";
  }
  csv.rows[0][4] = "zero";
  EXPECT_THROW(parse_results(csv), DataError);
  csv.rows[0][4] = "0.5";
  const auto status = static_cast<std::size_t>(std::find(csv.header.begin(), csv.header.end(), "status") - csv.header.begin());
  csv.rows[0][status] = "maybe";
  EXPECT_THROW(parse_results(csv), DataError);
  csv.rows[0][status] = "ok";
  EXPECT_NO_THROW(parse_results(csv));
  csv.rows[0][5] = "0.1;";
  EXPECT_THROW(parse_results(csv), DataError);
  csv.rows[0][5] = "";
  csv.header.pop_back();
  for (auto& r : csv.rows) r.pop_back();
  EXPECT_THROW(parse_results(csv), DataError);
}
