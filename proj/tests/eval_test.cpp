#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "eval_fixtures.hpp"
#include "grec/eval/replay.hpp"
#include "grec/eval/runtimes.hpp"
#include "grec/eval/scenario.hpp"
#include "grec/eval/split.hpp"
#include "grec/eval/synthetic.hpp"

using namespace grec;

namespace {

constexpr std::int64_t kDay = kSecondsPerDay;
constexpr std::int64_t kStart = 1699920000;

std::vector<Event> daily_events(int days) {
  std::vector<Event> ev;
  for (int d = 0; d < days; ++d) {
    for (int u = 0; u < 20; ++u) {
      ev.push_back({"u" + std::to_string(u), "i" + std::to_string(d % 5), InteractionType::Click,
                    kStart + d * kDay + 3600 * (u % 20)});
    }
  }
  return ev;
}

TEST(TemporalSplit, SplitsAtTheDayBoundary) {
  const auto ev = daily_events(14);
  const auto s = temporal_split(ev, 7, 7, 0.0);
  EXPECT_EQ(s.train.size(), 7u * 20);
  EXPECT_EQ(s.test.size(), 7u * 20);
  EXPECT_TRUE(s.validation.empty());
  for (const auto& e : s.train) EXPECT_LT(e.timestamp, kStart + 7 * kDay);
  for (const auto& e : s.test) EXPECT_GE(e.timestamp, kStart + 7 * kDay);
  EXPECT_EQ(s.test_begin, kStart + 7 * kDay);
  EXPECT_EQ(s.test_end, kStart + 14 * kDay);
}

TEST(TemporalSplit, RejectsShortSpans) {
  std::vector<Event> ev{{"u", "i", InteractionType::Click, kStart},
                        {"u", "j", InteractionType::Click, kStart + 100}};
  EXPECT_THROW(temporal_split(ev, 7, 7), InputError);
  EXPECT_THROW(temporal_split({}, 1, 1), InputError);
}

TEST(TemporalSplit, HandFixtureMembership) {
  // day 0 midnight, last second of day 1, first second of day 2, mid day 3,
  // and one event after the test window
  std::vector<Event> ev{{"a", "x", InteractionType::Click, kStart},
                        {"a", "y", InteractionType::Click, kStart + 2 * kDay - 1},
                        {"b", "x", InteractionType::Purchase, kStart + 2 * kDay},
                        {"b", "y", InteractionType::Click, kStart + 3 * kDay + 500},
                        {"c", "z", InteractionType::Click, kStart + 4 * kDay}};
  const auto s = temporal_split(ev, 2, 2, 0.0);
  ASSERT_EQ(s.train.size(), 2u);
  EXPECT_EQ(s.train[0], ev[0]);
  EXPECT_EQ(s.train[1], ev[1]);
  ASSERT_EQ(s.test.size(), 2u);
  EXPECT_EQ(s.test[0], ev[2]);
  EXPECT_EQ(s.test[1], ev[3]);
}

TEST(TemporalSplit, ValidationUsersAreHeldOutWholesale) {
  std::vector<Event> ev;
  for (int u = 0; u < 400; ++u) {
    for (int d = 0; d < 3; ++d) {
      ev.push_back({"u" + std::to_string(u), "i", InteractionType::Click, kStart + d * kDay + u});
    }
  }
  ev.push_back({"u0", "i", InteractionType::Click, kStart + 3 * kDay});
  const auto s = temporal_split(ev, 3, 1, 0.1, 7);
  std::set<std::string> train_users, val_users;
  for (const auto& e : s.train) train_users.insert(e.user_id);
  for (const auto& e : s.validation) val_users.insert(e.user_id);
  for (const auto& u : val_users) EXPECT_FALSE(train_users.contains(u));
  EXPECT_EQ(train_users.size() + val_users.size(), 400u);
  EXPECT_NEAR(static_cast<double>(val_users.size()) / 400.0, 0.1, 0.05);
}

TEST(Metrics, Identities) {
  MetricCounts c{1, 3, 10, 12, 0};
  EXPECT_DOUBLE_EQ(c.precision(), 0.3);
  EXPECT_DOUBLE_EQ(c.recall(), 0.25);
  EXPECT_DOUBLE_EQ(c.f1(), 2 * 0.3 * 0.25 / 0.55);
  MetricCounts zero{4, 0, 40, 20, 1};
  EXPECT_EQ(zero.f1(), 0.0);
  EXPECT_EQ(MetricCounts{}.precision(), 0.0);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    MetricCounts r;
    r.events = 1 + rng.below(50);
    r.slots = r.events * (1 + rng.below(10));
    r.truth_total = r.events + rng.below(100);
    r.hits = rng.below(std::min(r.slots, r.truth_total) + 1);
    const double p = r.precision(), q = r.recall(), f = r.f1();
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    EXPECT_LE(q, 1.0);
    EXPECT_LE(f, 1.0);
    if (p + q > 0) {
      EXPECT_NEAR(f, 2 * p * q / (p + q), 1e-15);
    }
  }
}

TEST(Metrics, ReportJsonAndTable) {
  auto a = MetricsReport::from_counts("a", {2, 4, 20, 10, 1});
  a.seeds = {1};
  auto b = MetricsReport::from_counts("a", {2, 2, 20, 10, 0});
  b.seeds = {2};
  const auto agg = MetricsReport::aggregate("a", {a, b});
  EXPECT_EQ(agg.counts.hits, 6u);
  EXPECT_DOUBLE_EQ(agg.precision, 6.0 / 40.0);
  EXPECT_EQ(agg.seeds, (std::vector<std::uint64_t>{1, 2}));
  const auto j = to_json(agg);
  EXPECT_EQ(j["averaging"], "micro");
  EXPECT_EQ(j["scaled_1e4"]["precision"], 1500);
  EXPECT_EQ(j["per_seed"].size(), 2u);
  EXPECT_NEAR(j["std"]["precision"].get<double>(), std::sqrt(0.005), 1e-12);
  const auto table = format_table({agg, b});
  EXPECT_NE(table.find("+- "), std::string::npos);
  EXPECT_NE(table.find("-33.3%"), std::string::npos);
  EXPECT_DOUBLE_EQ(f1_improvement(b, agg), 100.0 * (b.f1 - agg.f1) / agg.f1);
}

TEST(Replay, FuturePurchasesAreStrictlyLaterAndDistinct) {
  using IT = InteractionType;
  std::vector<ReplayEvent> ev{{0, IT::Click, 10}, {1, IT::Purchase, 10}, {2, IT::Purchase, 20},
                              {2, IT::Purchase, 30}, {3, IT::Cart, 40}, {4, IT::Purchase, 50}};
  EXPECT_EQ(future_purchases(ev, 0, 12), (std::vector<std::uint32_t>{2, 4}));
  EXPECT_EQ(future_purchases(ev, 0, 1), (std::vector<std::uint32_t>{2}));
  EXPECT_TRUE(future_purchases(ev, 5, 12).empty());
}

TEST(Replay, HandFixtureTotals) {
  const auto f = fixtures::hand_fixture();
  const auto cat = fixtures::tiny_catalog(6);
  const auto streams = group_user_streams(std::span<const Event>(f.events), cat);
  fixtures::ScriptedRuntime rt(f.recs);
  for (std::size_t threads : {1u, 3u}) {
    const auto r = evaluate_stream(rt, streams, {2, 2, false, threads});
    EXPECT_EQ(r.counts, (MetricCounts{9, 9, 18, 15, 8}));
    EXPECT_DOUBLE_EQ(r.precision, 0.5);
    EXPECT_DOUBLE_EQ(r.recall, 0.6);
    EXPECT_DOUBLE_EQ(r.f1, 6.0 / 11.0);
  }
}

TEST(Replay, UnknownItemsAreDroppedAndCounted) {
  std::vector<Event> ev{{"a", "i0", InteractionType::Click, 1}, {"a", "zz", InteractionType::Click, 2}};
  std::size_t unknown = 0;
  const auto s = group_user_streams(std::span<const Event>(ev), fixtures::tiny_catalog(2), &unknown);
  EXPECT_EQ(unknown, 1u);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].events.size(), 1u);
}

TEST(Replay, OracleScoresOne) {
  const auto streams = fixtures::oracle_streams(30, 6, 11);
  const auto r = evaluate_stream(OracleRuntime(6), streams, {6, 6, false, 1});
  EXPECT_GT(r.counts.events, 0u);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.f1, 1.0);
}

TEST(Baselines, LastK) {
  const std::vector<std::uint32_t> abc{0, 1, 2}, aba{0, 1, 0};
  EXPECT_EQ(baseline_last_k(abc, 2), (std::vector<std::uint32_t>{2, 1}));
  EXPECT_EQ(baseline_last_k(aba, 2), (std::vector<std::uint32_t>{0, 1}));
  EXPECT_TRUE(baseline_last_k({}, 3).empty());
  EXPECT_EQ(baseline_last_k(abc, 10), (std::vector<std::uint32_t>{2, 1, 0}));
}

TEST(Baselines, RandomMatchesUniformExpectation) {
  SyntheticConfig cfg;
  cfg.n_users = 300;
  cfg.n_items = 120;
  cfg.days = 7;
  cfg.seed = 5;
  const auto ds = generate_synthetic_dataset(cfg);
  const auto streams = group_user_streams(std::span<const Event>(ds.events), ds.features);
  const std::size_t k = 10, t = 12;
  // Expected hits per event: |truth \ excluded| * K / |eligible|; variance is
  // hypergeometric.
  double mean = 0.0, var = 0.0;
  for (const auto& s : streams) {
    std::set<std::uint32_t> purchased;
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      if (s.events[i].kind == InteractionType::Purchase) purchased.insert(s.events[i].item);
      const auto truth = future_purchases(s.events, i, t);
      if (truth.empty()) continue;
      const double n = static_cast<double>(cfg.n_items - purchased.size());
      double m = 0;
      for (auto x : truth) m += !purchased.contains(x);
      const double kk = std::min<double>(k, n);
      mean += kk * m / n;
      if (n > 1) var += kk * (m / n) * (1 - m / n) * (n - kk) / (n - 1);
    }
  }
  RandomRuntime rt(cfg.n_items, ExcludePolicy::Purchased, 99);
  const auto r = evaluate_stream(rt, streams, {k, t, false, 1});
  EXPECT_NEAR(static_cast<double>(r.counts.hits), mean, 3 * std::sqrt(var));
}

TEST(Baselines, RandomRespectsExclusionAndDistinctness) {
  RandomRuntime rt(12, ExcludePolicy::Interacted, 1);
  UserStream s{"u", {}};
  auto session = rt.start(s);
  for (std::uint32_t i = 0; i < 5; ++i) session->observe({i, InteractionType::Click, i});
  for (int rep = 0; rep < 50; ++rep) {
    const auto recs = session->recommend(5);
    std::set<std::uint32_t> seen(recs.begin(), recs.end());
    EXPECT_EQ(seen.size(), 5u);
    for (auto x : recs) EXPECT_GE(x, 5u);
  }
  EXPECT_EQ(session->recommend(20).size(), 7u);
}

// Independent CNN-EMA: EMA over raw features, exhaustive nearest search.
TEST(Runtimes, CnnEmaIsRawFeatureEmaWithExactKnn) {
  Rng rng(4);
  FeatureStore<double> fs(3);
  for (int i = 0; i < 40; ++i) {
    std::vector<double> row{rng.normal(), rng.normal(), rng.normal()};
    fs.add("i" + std::to_string(i), row);
  }
  PersonalizationConfig cfg;
  cfg.adapt = false;
  cfg.exclude = ExcludePolicy::None;
  cfg.alpha = 0.3;
  PersonalizedRuntime<double> rt("cnn-ema", Catalog<double>::create(fs, identity_mlp<double>(3)), cfg);
  UserStream s{"u", {}};
  auto session = rt.start(s);
  std::vector<double> u;
  for (int step = 0; step < 30; ++step) {
    const auto item = static_cast<std::uint32_t>(rng.below(40));
    session->observe({item, InteractionType::Click, step});
    const auto x = fs.row(item);
    if (u.empty()) {
      u.assign(x.begin(), x.end());
    } else {
      for (int k = 0; k < 3; ++k) u[k] = 0.7 * u[k] + 0.3 * x[k];
    }
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t r = 0; r < 40; ++r) {
      double d = 0;
      for (int k = 0; k < 3; ++k) d += (fs.row(r)[k] - u[k]) * (fs.row(r)[k] - u[k]);
      all.emplace_back(d, r);
    }
    std::sort(all.begin(), all.end());
    const auto recs = session->recommend(5);
    ASSERT_EQ(recs.size(), 5u);
    for (int j = 0; j < 5; ++j) EXPECT_EQ(recs[j], all[j].second);
  }
}

SyntheticConfig small_synthetic(std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n_users = 150;
  cfg.n_items = 80;
  cfg.n_clusters = 4;
  cfg.feature_dim = 8;
  cfg.days = 14;
  cfg.seed = seed;
  return cfg;
}

ModelConfig small_model() {
  ModelConfig m;
  m.contrastive.epochs_max = 3;
  m.contrastive.sgd.learning_rate = 1e-3;
  m.distill.epochs = 5;
  return m;
}

TEST(Scenario, ColdStartIsANoOpWithoutPersonalization) {
  const auto ds = generate_synthetic_dataset(small_synthetic(2));
  ScenarioConfig sc;
  sc.configurations = {"no-personalization", "cnn-ema", "no-pretraining-no-personalization", "full"};
  const auto cont = run_scenario_seed<float>(sc, small_model(), ds.events, ds.features, 1);
  sc.mode = ScenarioMode::DailyColdStart;
  const auto cold = run_scenario_seed<float>(sc, small_model(), ds.events, ds.features, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(cont.reports[i].counts, cold.reports[i].counts) << sc.configurations[i];
  }
  EXPECT_EQ(cont.reports[3].counts.events, cold.reports[3].counts.events);
}

TEST(Scenario, CnnEmaEqualsIdentityStudentWithoutPersonalization) {
  const auto ds = generate_synthetic_dataset(small_synthetic(3));
  ScenarioConfig sc;
  sc.configurations = {"cnn-ema"};
  const auto run = run_scenario_seed<float>(sc, small_model(), ds.events, ds.features, 4);
  const auto split = temporal_split(ds.events, 7, 7, 0.1, 4);
  const auto streams = group_user_streams(std::span<const Event>(split.test), ds.features);
  auto cfg = seeded(small_model(), 4).personalization;
  cfg.adapt = false;
  PersonalizedRuntime<float> rt("x", Catalog<float>::create(ds.features, identity_mlp<float>(8)), cfg);
  EXPECT_EQ(evaluate_stream(rt, streams, {}).counts, run.reports[0].counts);
}

TEST(Scenario, AllConfigurationsRunAndAreDeterministic) {
  const auto ds = generate_synthetic_dataset(small_synthetic(6));
  ScenarioConfig sc;
  sc.seeds = {1, 2};
  sc.threads = 2;
  const auto a = run_scenario<float>(sc, small_model(), ds.events, ds.features);
  sc.threads = 1;
  const auto b = run_scenario<float>(sc, small_model(), ds.events, ds.features);
  ASSERT_EQ(a.size(), all_configurations().size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, all_configurations()[i]);
    EXPECT_EQ(to_json(a[i]).dump(), to_json(b[i]).dump());
    EXPECT_EQ(a[i].per_seed.size(), 2u);
    EXPECT_GE(a[i].f1, 0.0);
    EXPECT_LE(a[i].f1, 1.0);
    EXPECT_GT(a[i].counts.events, 0u);
  }
}

TEST(Scenario, PerUserWindowStartsAtFirstEvent) {
  std::vector<UserStream> s{{"a", {{0, InteractionType::Click, 100}, {1, InteractionType::Click, 250}}},
                            {"b", {{0, InteractionType::Click, 300}, {1, InteractionType::Click, 390}}}};
  const auto global = window_streams(s, WindowAnchor::Global, 100, 200);
  ASSERT_EQ(global.size(), 1u);
  EXPECT_EQ(global[0].events.size(), 2u);
  const auto per_user = window_streams(s, WindowAnchor::PerUserFirstEvent, 100, 100);
  ASSERT_EQ(per_user.size(), 2u);
  EXPECT_EQ(per_user[0].events.size(), 1u);
  EXPECT_EQ(per_user[1].events.size(), 2u);
}

TEST(Scenario, RejectsBadConfig) {
  ScenarioConfig sc;
  sc.configurations = {"full", "bogus"};
  EXPECT_THROW(sc.validate(), InputError);
  sc = {};
  sc.k = 0;
  EXPECT_THROW(sc.validate(), InputError);
}

TEST(Synthetic, DeterministicPerSeed) {
  const auto cfg = small_synthetic(9);
  const auto a = generate_synthetic_dataset(cfg);
  const auto b = generate_synthetic_dataset(cfg);
  EXPECT_EQ(a.events, b.events);
  EXPECT_EQ(a.features, b.features);
  auto other = cfg;
  other.seed = 10;
  EXPECT_NE(generate_synthetic_dataset(other).events, a.events);
  EXPECT_TRUE(std::is_sorted(a.events.begin(), a.events.end(),
                             [](const Event& x, const Event& y) { return x.timestamp < y.timestamp; }));
}

TEST(Synthetic, TypeFrequencies) {
  const auto ds = generate_synthetic_dataset(small_synthetic(1));
  std::array<double, 4> n{};
  for (const auto& e : ds.events) n[relation_index(e.kind)] += 1;
  EXPECT_GT(n[0], 3 * n[1]);
  EXPECT_GT(n[0], 3 * n[2]);
  EXPECT_NEAR(n[1] / n[2], 1.0, 0.2);
  EXPECT_GT(n[2], 0.0);
  EXPECT_GT(n[3], 0.0);
}

TEST(Synthetic, InfiniteSharpnessBuysFromOneCluster) {
  auto cfg = small_synthetic(4);
  cfg.preference_sharpness = std::numeric_limits<double>::infinity();
  const auto ds = generate_synthetic_dataset(cfg);
  std::map<std::string, std::set<std::uint32_t>> clusters;
  for (const auto& e : ds.events) {
    if (e.kind != InteractionType::Purchase) continue;
    clusters[e.user_id].insert(ds.item_cluster[*ds.features.find(e.item_id)]);
  }
  ASSERT_FALSE(clusters.empty());
  for (const auto& [u, c] : clusters) EXPECT_EQ(c.size(), 1u) << u;
}

TEST(Synthetic, CoPurchaseWeightIsMostlyIntraCluster) {
  auto cfg = small_synthetic(8);
  cfg.preference_sharpness = 5.0;
  const auto ds = generate_synthetic_dataset(cfg);
  const auto g = build_cointeraction_graph(ds.events, TimeWindow::all(),
                                           {PairingConfig::Mode::Session, 30});
  double intra = 0, inter = 0;
  for (const auto& e : g.edges(InteractionType::Purchase)) {
    const auto cp = ds.item_cluster[*ds.features.find(g.item_id(e.p))];
    const auto cq = ds.item_cluster[*ds.features.find(g.item_id(e.q))];
    (cp == cq ? intra : inter) += e.weight;
  }
  EXPECT_GT(intra, inter);
  EXPECT_GT(intra, 0.0);
}

TEST(Synthetic, RejectsBadConfig) {
  SyntheticConfig cfg;
  cfg.n_clusters = cfg.n_items + 1;
  EXPECT_THROW(generate_synthetic_dataset(cfg), InputError);
  cfg = {};
  cfg.n_users = 0;
  EXPECT_THROW(generate_synthetic_dataset(cfg), InputError);
}

}  // namespace
