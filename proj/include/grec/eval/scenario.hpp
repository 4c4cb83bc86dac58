#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "grec/eval/replay.hpp"
#include "grec/eval/runtimes.hpp"
#include "grec/eval/split.hpp"
#include "grec/graph/hetero_graph.hpp"
#include "grec/graph/node_features.hpp"
#include "grec/student/distill.hpp"
#include "grec/teacher/train.hpp"

namespace grec {

enum class ScenarioMode { DailyColdStart, Continuous };
enum class WindowAnchor { Global, PerUserFirstEvent };

inline std::string_view to_string(ScenarioMode m) noexcept {
  return m == ScenarioMode::DailyColdStart ? "daily_cold_start" : "continuous";
}
inline std::optional<ScenarioMode> parse_scenario_mode(std::string_view s) noexcept {
  if (s == "daily_cold_start") return ScenarioMode::DailyColdStart;
  if (s == "continuous") return ScenarioMode::Continuous;
  return std::nullopt;
}
inline std::string_view to_string(WindowAnchor a) noexcept {
  return a == WindowAnchor::Global ? "global" : "per_user_first_event";
}
inline std::optional<WindowAnchor> parse_window_anchor(std::string_view s) noexcept {
  if (s == "global") return WindowAnchor::Global;
  if (s == "per_user_first_event") return WindowAnchor::PerUserFirstEvent;
  return std::nullopt;
}

// Names of the evaluated configurations. The first four are the ablation
// grid; the rest are reference baselines.
inline const std::vector<std::string>& all_configurations() {
  static const std::vector<std::string> names{
      "full", "no-personalization", "no-pretraining", "no-pretraining-no-personalization",
      "cnn-ema", "random", "last-k", "oracle"};
  return names;
}

inline const std::map<std::string, std::string>& configuration_titles() {
  static const std::map<std::string, std::string> titles{
      {"full", "Full model"},
      {"no-personalization", "No Personalization"},
      {"no-pretraining", "No Pre-training"},
      {"no-pretraining-no-personalization", "No Pre-training and No Personalization"},
      {"cnn-ema", "CNN-EMA"},
      {"random", "Random"},
      {"last-k", "Last-K Baseline"},
      {"oracle", "Oracle"}};
  return titles;
}

struct ScenarioConfig {
  ScenarioMode mode = ScenarioMode::Continuous;
  std::size_t weeks = 1;  // length of the evaluated personalization window
  std::size_t k = 10;
  std::size_t t = 12;
  std::size_t train_days = 7;
  double validation_fraction = 0.10;
  WindowAnchor window_anchor = WindowAnchor::Global;
  std::vector<std::string> configurations = all_configurations();
  std::vector<std::uint64_t> seeds{0};
  std::size_t threads = 1;

  void validate() const {
    if (k < 1 || t < 1) throw InputError("ScenarioConfig: K and T must be >= 1");
    if (weeks < 1) throw InputError("ScenarioConfig: weeks must be >= 1");
    if (train_days < 1) throw InputError("ScenarioConfig: train_days must be >= 1");
    if (seeds.empty()) throw InputError("ScenarioConfig: at least one seed is required");
    for (const auto& c : configurations) {
      const auto& all = all_configurations();
      if (std::find(all.begin(), all.end(), c) == all.end()) {
        throw InputError("ScenarioConfig: unknown configuration '" + c + "'");
      }
    }
  }
  bool operator==(const ScenarioConfig&) const = default;
};

// Everything the trained stages need.
struct ModelConfig {
  PairingConfig pairing{PairingConfig::Mode::Session, 30};
  std::vector<std::size_t> teacher_dims;  // empty: [d_in, 32, 16]
  Aggregation neighborhood_agg = Aggregation::Mean;
  Aggregation relation_agg = Aggregation::Mean;
  ContrastiveConfig contrastive{};
  DistillConfig distill{};  // empty student_dims: [d_in, 32, teacher output]
  PersonalizationConfig personalization{};

  bool operator==(const ModelConfig&) const = default;
};

inline std::vector<std::size_t> resolve_teacher_dims(const ModelConfig& m, std::size_t d_in) {
  auto dims = m.teacher_dims.empty() ? std::vector<std::size_t>{d_in, 32, 16} : m.teacher_dims;
  if (dims.front() != d_in) throw InputError("teacher dims must start at the feature dim");
  return dims;
}
inline std::vector<std::size_t> resolve_student_dims(const ModelConfig& m, std::size_t d_in) {
  auto dims = m.distill.student_dims.empty()
                  ? std::vector<std::size_t>{d_in, 32, resolve_teacher_dims(m, d_in).back()}
                  : m.distill.student_dims;
  if (dims.front() != d_in) throw InputError("student dims must start at the feature dim");
  return dims;
}

// Every stage seed is derived from one run seed.
inline ModelConfig seeded(ModelConfig m, std::uint64_t seed) {
  m.contrastive.sampler.seed = derive_seed(seed, {0x5445414348ULL});
  m.distill.seed = derive_seed(seed, {0x444953ULL});
  m.personalization.seed = derive_seed(seed, {0x504552ULL});
  return m;
}

template <typename T>
struct PretrainedModel {
  HeteroGraph graph;
  HgnnParams<T> teacher;
  MlpParams<T> student;
  TrainResult<T> teacher_run;
  DistillResult<T> distill_run;
};

template <typename T>
PretrainedModel<T> pretrain(std::span<const Event> train, std::span<const Event> validation,
                            const FeatureStore<T>& features, const ModelConfig& m) {
  PretrainedModel<T> out;
  out.graph = build_cointeraction_graph(train, TimeWindow::all(), m.pairing);
  const auto val_graph = build_cointeraction_graph(validation, TimeWindow::all(), m.pairing);
  const auto x = align_features(out.graph, features).rows;
  const auto vx = align_features(val_graph, features).rows;
  const auto dims = resolve_teacher_dims(m, features.dim());
  out.teacher_run = train_structural_encoder<T>(out.graph, x, dims, m.neighborhood_agg, m.relation_agg,
                                                m.contrastive, val_graph, vx);
  out.teacher = out.teacher_run.best;
  auto dcfg = m.distill;
  dcfg.student_dims = resolve_student_dims(m, features.dim());
  if (dcfg.student_dims.back() != dims.back()) {
    throw InputError("student output dim must equal the teacher output dim");
  }
  out.distill_run = distill(out.graph, x, out.teacher, dcfg, m.contrastive.sampler);
  out.student = out.distill_run.student;
  return out;
}

// Restricts each stream to its evaluation window.
inline std::vector<UserStream> window_streams(std::vector<UserStream> streams, WindowAnchor anchor,
                                              std::int64_t begin, std::int64_t length) {
  for (auto& s : streams) {
    if (s.events.empty()) continue;
    const auto start = anchor == WindowAnchor::Global ? begin : s.events.front().timestamp;
    std::erase_if(s.events, [&](const ReplayEvent& e) {
      return e.timestamp < start || e.timestamp >= start + length;
    });
  }
  std::erase_if(streams, [](const UserStream& s) { return s.events.empty(); });
  return streams;
}

template <typename T>
struct ScenarioRun {
  std::vector<MetricsReport> reports;  // one per configuration, in config order
  std::optional<PretrainedModel<T>> model;
  std::size_t test_users = 0;
  std::size_t test_events = 0;
};

template <typename T>
std::unique_ptr<Runtime> make_runtime(const std::string& name, const FeatureStore<T>& features,
                                      const std::optional<PretrainedModel<T>>& model,
                                      const ModelConfig& m, std::size_t k, std::size_t t,
                                      std::size_t threads) {
  auto personal = m.personalization;
  auto make = [&](MlpParams<T> student, bool adapt) {
    auto cfg = personal;
    cfg.adapt = adapt;
    cfg.k = k;
    return std::make_unique<PersonalizedRuntime<T>>(name, Catalog<T>::create(features, std::move(student), threads),
                                                    cfg);
  };
  const auto dims = resolve_student_dims(m, features.dim());
  if (name == "full") return make(model->student, true);
  if (name == "no-personalization") return make(model->student, false);
  if (name == "no-pretraining") return make(init_student<T>(dims, m.distill.seed), true);
  if (name == "no-pretraining-no-personalization") return make(init_student<T>(dims, m.distill.seed), false);
  if (name == "cnn-ema") return make(identity_mlp<T>(features.dim()), false);
  if (name == "random") {
    return std::make_unique<RandomRuntime>(features.size(), personal.exclude, personal.seed);
  }
  if (name == "last-k") return std::make_unique<LastKRuntime>();
  if (name == "oracle") return std::make_unique<OracleRuntime>(t);
  throw InputError("unknown configuration '" + name + "'");
}

// One seed: split, pretrain when needed, replay every configuration.
template <typename T>
ScenarioRun<T> run_scenario_seed(const ScenarioConfig& sc, const ModelConfig& base,
                                 std::span<const Event> events, const FeatureStore<T>& features,
                                 std::uint64_t seed) {
  sc.validate();
  const auto m = seeded(base, seed);
  const auto window = static_cast<std::int64_t>(sc.weeks) * 7;
  std::vector<Event> sorted(events.begin(), events.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
  auto test_days = window;
  if (sc.window_anchor == WindowAnchor::PerUserFirstEvent && !sorted.empty()) {
    const auto span = utc_day(sorted.back().timestamp) - utc_day(sorted.front().timestamp) + 1;
    test_days = std::max(window, span - static_cast<std::int64_t>(sc.train_days));
  }
  const auto split = temporal_split(sorted, static_cast<std::int64_t>(sc.train_days), test_days,
                                    sc.validation_fraction, seed);
  ScenarioRun<T> run;
  const bool needs_model = std::any_of(sc.configurations.begin(), sc.configurations.end(),
                                       [](const std::string& c) { return c == "full" || c == "no-personalization"; });
  if (needs_model) run.model = pretrain<T>(split.train, split.validation, features, m);

  auto streams = window_streams(group_user_streams(std::span<const Event>(split.test), features),
                                sc.window_anchor, split.test_begin, window * kSecondsPerDay);
  run.test_users = streams.size();
  for (const auto& s : streams) run.test_events += s.events.size();
  ReplayOptions opt{sc.k, sc.t, sc.mode == ScenarioMode::DailyColdStart, sc.threads};
  for (const auto& name : sc.configurations) {
    const auto rt = make_runtime<T>(name, features, run.model, m, sc.k, sc.t, sc.threads);
    auto report = evaluate_stream(*rt, streams, opt);
    report.seeds = {seed};
    run.reports.push_back(std::move(report));
  }
  return run;
}

// All seeds; each configuration's report pools counts over seeds and keeps
// the per-seed breakdown.
template <typename T>
std::vector<MetricsReport> run_scenario(const ScenarioConfig& sc, const ModelConfig& base,
                                        std::span<const Event> events, const FeatureStore<T>& features) {
  sc.validate();
  std::vector<std::vector<MetricsReport>> by_config(sc.configurations.size());
  for (auto seed : sc.seeds) {
    auto run = run_scenario_seed<T>(sc, base, events, features, seed);
    for (std::size_t c = 0; c < run.reports.size(); ++c) by_config[c].push_back(std::move(run.reports[c]));
  }
  std::vector<MetricsReport> out;
  for (std::size_t c = 0; c < by_config.size(); ++c) {
    out.push_back(MetricsReport::aggregate(sc.configurations[c], by_config[c]));
  }
  return out;
}

}  // namespace grec
