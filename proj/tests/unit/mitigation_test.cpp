#include <algorithm>
#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "fairgrid/data.hpp"
#include "fairgrid/error.hpp"
#include "fairgrid/mitigation.hpp"

using namespace fairgrid;

namespace {

double weighted_spd(std::span<const int> y, std::span<const int> s, std::span<const double> w) {
  double num[2] = {0, 0}, den[2] = {0, 0};
  for (std::size_t i = 0; i < y.size(); ++i) {
    num[s[i]] += w[i] * y[i];
    den[s[i]] += w[i];
  }
  return num[0] / den[0] - num[1] / den[1];
}

double spd_of(std::span<const int> yhat, std::span<const int> s) {
  std::vector<double> w(yhat.size(), 1.0);
  return weighted_spd(yhat, s, w);
}

// Rows duplicated once per group, so group membership carries no signal.
struct Mirrored {
  Eigen::MatrixXd X;
  std::vector<int> y, s;
};

Mirrored mirrored(std::size_t half, std::uint64_t seed) {
  Rng rng(seed);
  Mirrored m;
  m.X.resize(static_cast<Eigen::Index>(2 * half), 2);
  for (std::size_t i = 0; i < half; ++i) {
    const int label = rng.bernoulli(0.5);
    const double a = rng.normal() + (label ? 0.8 : -0.8), b = rng.normal();
    for (int g = 0; g < 2; ++g) {
      const auto r = static_cast<Eigen::Index>(2 * i + static_cast<std::size_t>(g));
      m.X(r, 0) = a;
      m.X(r, 1) = b;
      m.y.push_back(label);
      m.s.push_back(g);
    }
  }
  return m;
}

MitigationContext context(const Mirrored& train, const Mirrored& test) {
  MitigationContext ctx;
  ctx.train_X = &train.X;
  ctx.train_y = train.y;
  ctx.train_groups = train.s;
  ctx.test_X = &test.X;
  ctx.test_groups = test.s;
  ctx.base = {BaseKind::LR, {}, 0};
  ctx.seed = 17;
  return ctx;
}

}  // namespace

TEST(Ids, StagesAndComposition) {
  EXPECT_EQ(stage_of(MitigationId::RW), Stage::pre);
  EXPECT_EQ(stage_of(MitigationId::EGR), Stage::in);
  EXPECT_EQ(stage_of(MitigationId::CEO), Stage::post);
  EXPECT_EQ(stage_of(MitigationId::RW_CEO), Stage::mixed);
  for (auto id : {MitigationId::NONE, MitigationId::RW, MitigationId::ROC, MitigationId::CEO, MitigationId::EGR,
                  MitigationId::RW_ROC, MitigationId::RW_CEO, MitigationId::LFR_PRE, MitigationId::LFR_IN,
                  MitigationId::AD}) {
    EXPECT_EQ(parse_mitigation_id(to_string(id)), id);
  }
  const MitigationSteps rr = expand(MitigationId::RW_ROC);
  EXPECT_TRUE(rr.reweigh);
  EXPECT_EQ(rr.post, PostProcessor::roc);
  const MitigationSteps rc = expand(MitigationId::RW_CEO);
  EXPECT_TRUE(rc.reweigh);
  EXPECT_EQ(rc.post, PostProcessor::ceo);
  const std::vector<MitigationId> pair{MitigationId::EGR, MitigationId::RW};
  const MitigationSteps c = compose(pair);
  EXPECT_TRUE(c.reweigh && c.egr);
  const std::vector<MitigationId> clash{MitigationId::ROC, MitigationId::CEO};
  EXPECT_THROW(compose(clash), ConfigError);
  EXPECT_THROW(expand(MitigationId::LFR_PRE), NotImplementedError);
  EXPECT_THROW(expand(MitigationId::AD), NotImplementedError);
  EXPECT_THROW(parse_mitigation_id("XX"), ConfigError);
}

TEST(Reweigh, HandExample) {
  const std::vector<int> s{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  const std::vector<int> y{1, 0, 0, 0, 0, 1, 1, 1, 1, 0};
  const ReweighResult r = reweigh(y, s);
  EXPECT_DOUBLE_EQ(r.cell_weight[0 * 2 + 1], 2.5);
  EXPECT_DOUBLE_EQ(r.cell_weight[0 * 2 + 0], 0.625);
  EXPECT_DOUBLE_EQ(r.cell_weight[1 * 2 + 1], 0.625);
  EXPECT_DOUBLE_EQ(r.cell_weight[1 * 2 + 0], 2.5);
  EXPECT_DOUBLE_EQ(r.weights[0], 2.5);
  EXPECT_EQ(weighted_spd(y, s, r.weights), 0.0);
}

TEST(Reweigh, BalancedDataGetsUnitWeights) {
  const std::vector<int> s{0, 0, 1, 1}, y{1, 0, 1, 0};
  for (double w : reweigh(y, s).weights) EXPECT_DOUBLE_EQ(w, 1.0);
}

TEST(Reweigh, EmptyCellIsFlagged) {
  const std::vector<int> s{0, 0, 1, 1}, y{1, 1, 1, 0};
  const ReweighResult r = reweigh(y, s);
  EXPECT_TRUE(r.empty_cell[0]);
  EXPECT_EQ(r.cell_weight[0], 0.0);
}

TEST(Reweigh, ParityAndScaleProperty) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 8 + rng.index(400);
    std::vector<int> y(n), s(n);
    const double ps = 0.1 + 0.8 * rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.bernoulli(ps);
      y[i] = rng.bernoulli(s[i] ? 0.7 : 0.3);
    }
    // force all four cells to be populated
    y[0] = 0, s[0] = 0, y[1] = 1, s[1] = 0, y[2] = 0, s[2] = 1, y[3] = 1, s[3] = 1;
    const auto w = reweigh(y, s).weights;
    EXPECT_NEAR(weighted_spd(y, s, w), 0.0, 1e-12);
    double total = 0;
    for (double v : w) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, static_cast<double>(n), 1e-9);
  }
}

TEST(Roc, RegionExamples) {
  const std::vector<double> sc{0.45, 0.55, 0.75};
  const std::vector<int> g{0, 1, 1};
  EXPECT_EQ(roc_adjust(sc, g, 0.5, 0.1), (std::vector<int>{1, 0, 1}));
  EXPECT_EQ(roc_adjust(std::vector<double>{0.41, 0.62}, std::vector<int>{0, 1}, 0.5, 0.1), (std::vector<int>{1, 1}));
  EXPECT_EQ(roc_adjust(sc, g, 0.5, 0.0), apply_threshold(sc, 0.5));
  EXPECT_THROW(roc_adjust(sc, g, 0.3, 0.35), ConfigError);
}

TEST(Roc, OnlyCriticalRegionChanges) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> sc(50);
    std::vector<int> g(50);
    for (std::size_t i = 0; i < 50; ++i) {
      sc[i] = rng.uniform();
      g[i] = rng.bernoulli(0.5);
    }
    const double tau = 0.2 + 0.6 * rng.uniform();
    const double band = rng.uniform() * std::min(tau, 1 - tau);
    const auto adj = roc_adjust(sc, g, tau, band);
    const auto plain = apply_threshold(sc, tau);
    for (std::size_t i = 0; i < 50; ++i) {
      if (std::abs(sc[i] - tau) > band) EXPECT_EQ(adj[i], plain[i]);
      else EXPECT_EQ(adj[i], g[i] == 0 ? 1 : 0);
    }
  }
}

TEST(Roc, SelectBandFixture) {
  std::vector<double> sc;
  std::vector<int> g;
  auto add = [&](int group, double score, int count) {
    for (int i = 0; i < count; ++i) {
      sc.push_back(score);
      g.push_back(group);
    }
  };
  add(1, 0.95, 14);
  add(1, 0.05, 6);
  add(0, 0.95, 8);
  add(0, 0.45, 5);
  add(0, 0.35, 4);
  add(0, 0.05, 3);
  const std::vector<int> y(sc.size(), 1);
  const ValidationSet v{sc, y, g};
  EXPECT_NEAR(spd_of(roc_adjust(sc, g, 0.5, 0.0), g), -0.3, 1e-12);
  EXPECT_NEAR(spd_of(roc_adjust(sc, g, 0.5, 0.1), g), -0.05, 1e-12);
  EXPECT_NEAR(spd_of(roc_adjust(sc, g, 0.5, 0.2), g), 0.15, 1e-12);
  const std::vector<double> grid{0.0, 0.1, 0.2};
  EXPECT_EQ(roc_select_band(v, 0.5, grid, MetricId::SPD), 0.1);
  const std::vector<double> single{0.2};
  EXPECT_EQ(roc_select_band(v, 0.5, single, MetricId::SPD), 0.2);
}

TEST(Roc, UnbiasedValidationKeepsBandZero) {
  const std::vector<double> sc{0.9, 0.45, 0.1, 0.9, 0.45, 0.1};
  const std::vector<int> g{0, 0, 0, 1, 1, 1}, y{1, 0, 0, 1, 1, 0};
  EXPECT_EQ(roc_select_band({sc, y, g}, 0.5, kDefaultRocBands, MetricId::SPD), 0.0);
}

TEST(Ceo, MixRate) {
  EXPECT_DOUBLE_EQ(ceo_mix_rate(0.10, 0.25, 0.5), 0.375);
  EXPECT_EQ(ceo_mix_rate(0.2, 0.2, 0.5), 0.0);
  EXPECT_EQ(ceo_mix_rate(0.2, 0.4, 0.2), 0.0);
  EXPECT_EQ(ceo_mix_rate(0.1, 0.9, 0.3), 1.0);
}

TEST(Ceo, ApplyPreservesUntouchedGroupAndUsesBaseRate) {
  Rng gen(3);
  std::vector<double> sc(200);
  std::vector<int> g(200);
  for (std::size_t i = 0; i < 200; ++i) {
    sc[i] = gen.uniform();
    g[i] = static_cast<int>(i % 2);
  }
  CeoPlan plan;
  plan.mixed_group = 1;
  plan.mix_rate = 0.5;
  plan.base_rate = 0.37;
  Rng rng(4);
  const auto out = ceo_apply(plan, sc, g, rng);
  std::size_t mixed = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    if (g[i] == 0) {
      EXPECT_EQ(std::memcmp(&out[i], &sc[i], sizeof(double)), 0);
    } else if (out[i] != sc[i]) {
      EXPECT_EQ(out[i], 0.37);
      ++mixed;
    }
  }
  EXPECT_GT(mixed, 20u);
  EXPECT_LT(mixed, 80u);
  plan.mix_rate = 1.0;
  Rng rng2(4);
  const auto full = ceo_apply(plan, sc, g, rng2);
  for (std::size_t i = 1; i < 200; i += 2) EXPECT_EQ(full[i], 0.37);
  plan.mix_rate = 0.0;
  Rng rng3(4);
  EXPECT_EQ(ceo_apply(plan, sc, g, rng3), sc);
}

TEST(Ceo, EqualCostsLeaveScoresUnchanged) {
  const std::vector<double> sc{0.8, 0.3, 0.6, 0.8, 0.3, 0.6};
  const std::vector<int> y{1, 0, 1, 1, 0, 1}, g{0, 0, 0, 1, 1, 1};
  const CeoPlan plan = ceo_fit({sc, y, g}, CeoCost::fnr);
  EXPECT_EQ(plan.mix_rate, 0.0);
  EXPECT_EQ(ceo_adjust({sc, y, g}, sc, g, CeoCost::fnr, 5), sc);
}

TEST(Ceo, MixesLowerCostGroup) {
  // group 0 scores positives well, group 1 poorly
  const std::vector<double> sc{0.9, 0.9, 0.1, 0.1, 0.4, 0.4, 0.3, 0.3};
  const std::vector<int> y{1, 1, 0, 0, 1, 1, 0, 0}, g{0, 0, 0, 0, 1, 1, 1, 1};
  const CeoPlan plan = ceo_fit({sc, y, g}, CeoCost::fnr);
  ASSERT_EQ(plan.mixed_group, 0);
  EXPECT_GT(plan.mix_rate, 0.0);
  EXPECT_DOUBLE_EQ(plan.base_rate, 0.5);
  EXPECT_LT(*plan.group_cost[0], *plan.group_cost[1]);
}

TEST(Egr, SingleRoundIsPlainFit) {
  const Dataset d = synth_biased(400, -0.3, 0.5, 3);
  const FeatureMatrix X = encode(d);
  EgrOptions opt;
  opt.rounds = 1;
  const EstimatorSpec spec{BaseKind::LR, {}, 1};
  const auto egr = egr_train(spec, X.values, d.labels(), d.groups(), opt);
  const std::vector<double> w(d.size(), 1.0);
  const auto plain = fit(spec, X.values, d.labels(), w);
  EXPECT_EQ(egr->predict_proba(X.values), plain->predict_proba(X.values));
}

TEST(Egr, InactiveConstraintsKeepPlainMembers) {
  const Dataset d = synth_biased(400, -0.3, 0.5, 4);
  const FeatureMatrix X = encode(d);
  EgrOptions opt;
  opt.rounds = 6;
  opt.epsilon = 1.0;
  const EstimatorSpec spec{BaseKind::LR, {}, 1};
  EgrTrace trace;
  const auto egr = egr_train(spec, X.values, d.labels(), d.groups(), opt, {}, &trace);
  for (const auto& lambda : trace.multipliers) {
    for (double l : lambda) EXPECT_EQ(l, 0.0);
  }
  const std::vector<double> w(d.size(), 1.0);
  const auto plain = fit(spec, X.values, d.labels(), w)->predict_proba(X.values);
  const auto mix = egr->predict_proba(X.values);
  for (std::size_t i = 0; i < mix.size(); ++i) EXPECT_NEAR(mix[i], plain[i], 1e-15);
}

TEST(Egr, MultipliersStayFeasible) {
  const Dataset d = synth_biased(600, -0.3, 0.5, 5);
  const FeatureMatrix X = encode(d);
  for (EgrConstraint c : {EgrConstraint::demographic_parity, EgrConstraint::equalized_odds}) {
    EgrOptions opt;
    opt.rounds = 15;
    opt.constraint = c;
    opt.bound = 5.0;
    opt.eta = 20.0;
    EgrTrace trace;
    egr_train({BaseKind::LR, {}, 1}, X.values, d.labels(), d.groups(), opt, {}, &trace);
    ASSERT_EQ(trace.multipliers.size(), 15u);
    for (const auto& lambda : trace.multipliers) {
      double total = 0;
      for (double l : lambda) {
        EXPECT_GE(l, 0.0);
        total += l;
      }
      EXPECT_LE(total, opt.bound);
    }
  }
}

TEST(Egr, ReducesParityGapOnFixture) {
  const Dataset d = synth_biased(2000, -0.3, 0.5, 42);
  const FoldPlan plan = stratified_kfold(d, 5, 42);
  const auto train = plan.train_rows(0), test = plan.test_rows(0);
  const Encoder enc = Encoder::fit(d, train);
  const FeatureMatrix Xtr = enc.transform(d, train), Xte = enc.transform(d, test);
  const Dataset dtr = d.subset(train), dte = d.subset(test);
  const EstimatorSpec spec{BaseKind::LR, {}, 1};
  const std::vector<double> w(dtr.size(), 1.0);
  const auto plain = apply_threshold(fit(spec, Xtr.values, dtr.labels(), w)->predict_proba(Xte.values), 0.5);
  const auto egr =
      apply_threshold(egr_train(spec, Xtr.values, dtr.labels(), dtr.groups(), {})->predict_proba(Xte.values), 0.5);
  EXPECT_LT(std::abs(spd_of(egr, dte.groups())), std::abs(spd_of(plain, dte.groups())));
}

TEST(Egr, OptionValidation) {
  EgrOptions o;
  o.rounds = 0;
  EXPECT_THROW(o.validate(), ConfigError);
  o = {};
  o.bound = 0;
  EXPECT_THROW(o.validate(), ConfigError);
  EXPECT_EQ(parse_egr_constraint("equalized_odds"), EgrConstraint::equalized_odds);
  EXPECT_THROW(parse_egr_constraint("xx"), ConfigError);
}

TEST(Pipeline, NoneIsPlainFit) {
  const Mirrored tr = mirrored(100, 1), te = mirrored(40, 2);
  const MitigationContext ctx = context(tr, te);
  const PipelineOutcome out = apply_mitigation(MitigationId::NONE, ctx);
  EstimatorSpec spec = ctx.base;
  spec.seed = mix_seed({ctx.seed, 1});
  const auto scores = fit(spec, tr.X, tr.y, std::vector<double>(tr.y.size(), 1.0))->predict_proba(te.X);
  EXPECT_EQ(out.predict(0.5), apply_threshold(scores, 0.5));
}

TEST(Pipeline, RwRocOnUnbiasedDataEqualsNone) {
  const Mirrored tr = mirrored(100, 3), te = mirrored(40, 4);
  const MitigationContext ctx = context(tr, te);
  const PipelineOutcome none = apply_mitigation(MitigationId::NONE, ctx);
  const PipelineOutcome rr = apply_mitigation(MitigationId::RW_ROC, ctx);
  for (double w : rr.train_weights()) EXPECT_EQ(w, 1.0);
  for (double tau : {0.3, 0.5, 0.7}) {
    EXPECT_EQ(rr.roc_band(tau), 0.0);
    EXPECT_EQ(rr.predict(tau), none.predict(tau));
  }
}

TEST(Pipeline, RwCeoWithoutMixingEqualsRw) {
  const Mirrored tr = mirrored(100, 5), te = mirrored(40, 6);
  const MitigationContext ctx = context(tr, te);
  const PipelineOutcome rw = apply_mitigation(MitigationId::RW, ctx);
  const PipelineOutcome rc = apply_mitigation(MitigationId::RW_CEO, ctx);
  ASSERT_TRUE(rc.ceo_plan().has_value());
  EXPECT_EQ(rc.ceo_plan()->mix_rate, 0.0);
  EXPECT_EQ(rc.test_scores(), rw.test_scores());
}

TEST(Pipeline, DeterministicAndSerializable) {
  const Dataset d = synth_biased(300, -0.3, 0.5, 9);
  const FeatureMatrix X = encode(d);
  MitigationContext ctx;
  ctx.train_X = ctx.test_X = &X.values;
  ctx.train_y = d.labels();
  ctx.train_groups = ctx.test_groups = d.groups();
  ctx.base = {BaseKind::RF, {{"n_estimators", std::int64_t{5}}}, 0};
  ctx.seed = 3;
  ctx.options.egr.rounds = 4;
  for (auto id : {MitigationId::RW, MitigationId::ROC, MitigationId::CEO, MitigationId::EGR, MitigationId::RW_CEO}) {
    const PipelineOutcome a = apply_mitigation(id, ctx), b = apply_mitigation(id, ctx);
    EXPECT_EQ(a.test_scores(), b.test_scores()) << to_string(id);
    EXPECT_EQ(a.predict(0.5), b.predict(0.5)) << to_string(id);
    const std::vector<double> taus{0.5};
    EXPECT_EQ(a.to_json(taus), b.to_json(taus));
  }
}
