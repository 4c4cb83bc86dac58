#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "grec/eval/scenario.hpp"
#include "grec/eval/synthetic.hpp"
#include "grec/pipeline/toml.hpp"

namespace grec {

enum class Precision { Float32, Float64 };

inline constexpr Precision kDefaultPrecision =
#ifdef GREC_DOUBLE_PRECISION
    Precision::Float64;
#else
    Precision::Float32;
#endif

struct PathsConfig {
  std::string events;
  std::string features;
  std::string output_dir = "out";
  std::string teacher_checkpoint;  // empty: <output_dir>/teacher.grec
  std::string student_checkpoint;  // empty: <output_dir>/student.grec
  std::string resume_checkpoint;   // teacher checkpoint to continue training from
  bool operator==(const PathsConfig&) const = default;

  std::string out(const std::string& name) const { return (std::filesystem::path(output_dir) / name).string(); }
  std::string teacher() const { return teacher_checkpoint.empty() ? out("teacher.grec") : teacher_checkpoint; }
  std::string student() const { return student_checkpoint.empty() ? out("student.grec") : student_checkpoint; }
  std::string graph() const { return out("graph.ggrf"); }
  std::string validation_graph() const { return out("validation_graph.ggrf"); }
};

struct GraphConfig {
  std::optional<std::int64_t> window_begin;  // UTC seconds, inclusive
  std::optional<std::int64_t> window_end;    // exclusive
  double validation_fraction = 0.10;         // users held out into the validation graph
  bool operator==(const GraphConfig&) const = default;
  TimeWindow window() const {
    TimeWindow w;
    if (window_begin) w.begin = *window_begin;
    if (window_end) w.end = *window_end;
    return w;
  }
};

enum class Transport { Stdio, Tcp };

struct ServeConfig {
  Transport transport = Transport::Stdio;
  std::string host = "127.0.0.1";
  int port = 7878;
  std::size_t threads = 1;  // catalog projection threads
  bool operator==(const ServeConfig&) const = default;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  Precision precision = kDefaultPrecision;
  PathsConfig paths;
  GraphConfig graph;
  ModelConfig model;
  ScenarioConfig scenario;
  SyntheticConfig synthetic;
  ServeConfig serve;
  bool operator==(const PipelineConfig&) const = default;

  void validate() const;
};

namespace config_detail {

// Reads typed keys from one table and remembers which were consumed.
class Section {
 public:
  Section(const toml::Table* t, std::string name) : t_(t), name_(std::move(name)) {}

  template <typename F>
  void read(const std::string& key, F&& assign) {
    if (!t_) return;
    auto it = t_->find(key);
    if (it == t_->end()) return;
    used_.insert(key);
    try {
      assign(it->second);
    } catch (const ConfigError& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }
  void check_unknown() const {
    if (!t_) return;
    for (const auto& [k, v] : *t_) {
      if (!used_.contains(k)) throw ConfigError("unknown config key " + where(k));
    }
  }

 private:
  std::string where(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }
  const toml::Table* t_;
  std::string name_;
  std::set<std::string> used_;
};

inline double as_double(const toml::Value& v) {
  if (v.is_float()) return std::get<double>(v.v);
  if (v.is_int()) return static_cast<double>(std::get<std::int64_t>(v.v));
  throw ConfigError("expected a number");
}
inline std::int64_t as_int(const toml::Value& v) {
  if (!v.is_int()) throw ConfigError("expected an integer");
  return std::get<std::int64_t>(v.v);
}
inline std::size_t as_count(const toml::Value& v) {
  const auto i = as_int(v);
  if (i < 0) throw ConfigError("expected a non-negative integer");
  return static_cast<std::size_t>(i);
}
inline std::uint64_t as_u64(const toml::Value& v) {
  const auto i = as_int(v);
  if (i < 0) throw ConfigError("expected a non-negative integer");
  return static_cast<std::uint64_t>(i);
}
inline bool as_bool(const toml::Value& v) {
  if (!v.is_bool()) throw ConfigError("expected true or false");
  return std::get<bool>(v.v);
}
inline std::string as_string(const toml::Value& v) {
  if (!v.is_string()) throw ConfigError("expected a string");
  return std::get<std::string>(v.v);
}
template <typename F>
auto as_list(const toml::Value& v, F&& each) {
  if (!v.is_array()) throw ConfigError("expected an array");
  std::vector<decltype(each(v))> out;
  for (const auto& x : std::get<toml::Array>(v.v)) out.push_back(each(x));
  return out;
}
template <typename E, typename P>
E as_enum(const toml::Value& v, P&& parse, const char* choices) {
  const auto s = as_string(v);
  const auto e = parse(s);
  if (!e) throw ConfigError("'" + s + "' is not one of " + choices);
  return *e;
}

inline toml::Value num(double d) { return {d}; }
inline toml::Value count(std::uint64_t n) { return {static_cast<std::int64_t>(n)}; }
inline toml::Value str(std::string_view s) { return {std::string(s)}; }
inline toml::Value counts(const std::vector<std::size_t>& v) {
  toml::Array a;
  for (auto x : v) a.push_back(count(x));
  return {a};
}

inline std::optional<Aggregation> parse_aggregation(std::string_view s) {
  if (s == "mean") return Aggregation::Mean;
  if (s == "sum") return Aggregation::Sum;
  return std::nullopt;
}
inline std::optional<PairingConfig::Mode> parse_pairing(std::string_view s) {
  if (s == "window") return PairingConfig::Mode::Window;
  if (s == "session") return PairingConfig::Mode::Session;
  return std::nullopt;
}
inline std::optional<Precision> parse_precision(std::string_view s) {
  if (s == "float32") return Precision::Float32;
  if (s == "float64") return Precision::Float64;
  return std::nullopt;
}
inline std::optional<Transport> parse_transport(std::string_view s) {
  if (s == "stdio") return Transport::Stdio;
  if (s == "tcp") return Transport::Tcp;
  return std::nullopt;
}

}  // namespace config_detail

inline std::string_view to_string(Precision p) { return p == Precision::Float32 ? "float32" : "float64"; }

inline PipelineConfig config_from_toml(const toml::Document& doc) {
  using namespace config_detail;
  static const std::set<std::string> sections{"",        "paths",           "graph",    "sampler",
                                              "teacher", "student",         "personalization",
                                              "scenario", "synthetic",      "serve"};
  for (const auto& [name, t] : doc) {
    if (!sections.contains(name)) throw ConfigError("unknown config section [" + name + "]");
  }
  auto table = [&](const std::string& n) -> const toml::Table* {
    auto it = doc.find(n);
    return it == doc.end() ? nullptr : &it->second;
  };
  PipelineConfig c;
  auto& m = c.model;

  Section top(table(""), "");
  top.read("seed", [&](auto& v) { c.seed = as_u64(v); });
  top.read("precision", [&](auto& v) { c.precision = as_enum<Precision>(v, parse_precision, "float32, float64"); });
  top.check_unknown();

  Section paths(table("paths"), "paths");
  paths.read("events", [&](auto& v) { c.paths.events = as_string(v); });
  paths.read("features", [&](auto& v) { c.paths.features = as_string(v); });
  paths.read("output_dir", [&](auto& v) { c.paths.output_dir = as_string(v); });
  paths.read("teacher_checkpoint", [&](auto& v) { c.paths.teacher_checkpoint = as_string(v); });
  paths.read("student_checkpoint", [&](auto& v) { c.paths.student_checkpoint = as_string(v); });
  paths.read("resume_checkpoint", [&](auto& v) { c.paths.resume_checkpoint = as_string(v); });
  paths.check_unknown();

  Section graph(table("graph"), "graph");
  graph.read("window_begin", [&](auto& v) { c.graph.window_begin = as_int(v); });
  graph.read("window_end", [&](auto& v) { c.graph.window_end = as_int(v); });
  graph.read("validation_fraction", [&](auto& v) { c.graph.validation_fraction = as_double(v); });
  graph.read("pairing", [&](auto& v) { m.pairing.mode = as_enum<PairingConfig::Mode>(v, parse_pairing, "window, session"); });
  graph.read("session_gap_minutes", [&](auto& v) { m.pairing.session_gap_minutes = as_int(v); });
  graph.check_unknown();

  Section sampler(table("sampler"), "sampler");
  auto& sc = m.contrastive.sampler;
  sampler.read("batch_size", [&](auto& v) { sc.batch_size = as_count(v); });
  sampler.read("num_neighbors", [&](auto& v) { sc.num_neighbors = as_list(v, as_count); });
  sampler.read("weighted", [&](auto& v) { sc.weighted = as_bool(v); });
  sampler.check_unknown();

  Section teacher(table("teacher"), "teacher");
  auto& ct = m.contrastive;
  teacher.read("dims", [&](auto& v) { m.teacher_dims = as_list(v, as_count); });
  teacher.read("neighborhood_agg", [&](auto& v) { m.neighborhood_agg = as_enum<Aggregation>(v, parse_aggregation, "mean, sum"); });
  teacher.read("relation_agg", [&](auto& v) { m.relation_agg = as_enum<Aggregation>(v, parse_aggregation, "mean, sum"); });
  teacher.read("learning_rate", [&](auto& v) { ct.sgd.learning_rate = as_double(v); });
  teacher.read("weight_decay", [&](auto& v) { ct.sgd.weight_decay = as_double(v); });
  teacher.read("epochs_max", [&](auto& v) { ct.epochs_max = as_count(v); });
  teacher.read("patience", [&](auto& v) { ct.patience = as_count(v); });
  teacher.read("workers", [&](auto& v) { ct.workers = as_count(v); });
  teacher.read("normalize_weights", [&](auto& v) { ct.normalize_weights = as_bool(v); });
  teacher.read("gamma", [&](auto& v) {
    const auto g = as_list(v, as_double);
    if (g.size() != kNumRelations) throw ConfigError("gamma needs 4 entries (click, favorite, cart, purchase)");
    std::copy(g.begin(), g.end(), ct.gamma.begin());
  });
  teacher.check_unknown();

  Section student(table("student"), "student");
  auto& d = m.distill;
  student.read("dims", [&](auto& v) { d.student_dims = as_list(v, as_count); });
  student.read("learning_rate", [&](auto& v) { d.sgd.learning_rate = as_double(v); });
  student.read("weight_decay", [&](auto& v) { d.sgd.weight_decay = as_double(v); });
  student.read("epochs", [&](auto& v) { d.epochs = as_count(v); });
  student.read("patience", [&](auto& v) { d.patience = as_count(v); });
  student.read("batch_size", [&](auto& v) { d.batch_size = as_count(v); });
  student.read("holdout_fraction", [&](auto& v) { d.holdout_fraction = as_double(v); });
  student.read("resample_targets", [&](auto& v) { d.resample_targets = as_bool(v); });
  student.read("standardize_targets", [&](auto& v) { d.standardize_targets = as_bool(v); });
  student.check_unknown();

  Section pers(table("personalization"), "personalization");
  auto& p = m.personalization;
  pers.read("alpha", [&](auto& v) { p.alpha = as_double(v); });
  pers.read("margin", [&](auto& v) { p.margin = as_double(v); });
  pers.read("learning_rate", [&](auto& v) { p.sgd.learning_rate = as_double(v); });
  pers.read("weight_decay", [&](auto& v) { p.sgd.weight_decay = as_double(v); });
  pers.read("adapt_every", [&](auto& v) { p.adapt_every = as_count(v); });
  pers.read("base_steps", [&](auto& v) { p.base_steps = as_count(v); });
  pers.read("k", [&](auto& v) { p.k = as_count(v); });
  pers.read("exclude", [&](auto& v) {
    p.exclude = as_enum<ExcludePolicy>(v, parse_exclude_policy, "none, purchased, interacted");
  });
  pers.read("negatives_capacity", [&](auto& v) { p.negatives_capacity = as_count(v); });
  pers.read("ema_window", [&](auto& v) { p.ema_window = as_count(v); });
  pers.read("adapt", [&](auto& v) { p.adapt = as_bool(v); });
  pers.check_unknown();

  Section scen(table("scenario"), "scenario");
  auto& s = c.scenario;
  scen.read("mode", [&](auto& v) {
    s.mode = as_enum<ScenarioMode>(v, parse_scenario_mode, "daily_cold_start, continuous");
  });
  scen.read("weeks", [&](auto& v) { s.weeks = as_count(v); });
  scen.read("k", [&](auto& v) { s.k = as_count(v); });
  scen.read("t", [&](auto& v) { s.t = as_count(v); });
  scen.read("train_days", [&](auto& v) { s.train_days = as_count(v); });
  scen.read("validation_fraction", [&](auto& v) { s.validation_fraction = as_double(v); });
  scen.read("window_anchor", [&](auto& v) {
    s.window_anchor = as_enum<WindowAnchor>(v, parse_window_anchor, "global, per_user_first_event");
  });
  scen.read("configurations", [&](auto& v) { s.configurations = as_list(v, as_string); });
  scen.read("seeds", [&](auto& v) { s.seeds = as_list(v, as_u64); });
  scen.read("threads", [&](auto& v) { s.threads = as_count(v); });
  scen.check_unknown();

  Section syn(table("synthetic"), "synthetic");
  auto& y = c.synthetic;
  syn.read("n_users", [&](auto& v) { y.n_users = as_count(v); });
  syn.read("n_items", [&](auto& v) { y.n_items = as_count(v); });
  syn.read("n_clusters", [&](auto& v) { y.n_clusters = as_count(v); });
  syn.read("feature_dim", [&](auto& v) { y.feature_dim = as_count(v); });
  syn.read("days", [&](auto& v) { y.days = as_count(v); });
  syn.read("events_per_user_per_day", [&](auto& v) { y.events_per_user_per_day = as_count(v); });
  syn.read("preference_sharpness", [&](auto& v) { y.preference_sharpness = as_double(v); });
  syn.read("signal_dims", [&](auto& v) { y.signal_dims = as_count(v); });
  syn.read("prototype_scale", [&](auto& v) { y.prototype_scale = as_double(v); });
  syn.read("feature_noise", [&](auto& v) { y.feature_noise = as_double(v); });
  syn.read("style_strength", [&](auto& v) { y.style_strength = as_double(v); });
  syn.read("explore_prob", [&](auto& v) { y.explore_prob = as_double(v); });
  syn.read("active_prob", [&](auto& v) { y.active_prob = as_double(v); });
  syn.read("start_timestamp", [&](auto& v) { y.start_timestamp = as_int(v); });
  syn.check_unknown();

  Section serve(table("serve"), "serve");
  serve.read("transport", [&](auto& v) { c.serve.transport = as_enum<Transport>(v, parse_transport, "stdio, tcp"); });
  serve.read("host", [&](auto& v) { c.serve.host = as_string(v); });
  serve.read("port", [&](auto& v) { c.serve.port = static_cast<int>(as_int(v)); });
  serve.read("threads", [&](auto& v) { c.serve.threads = as_count(v); });
  serve.check_unknown();

  c.validate();
  return c;
}

inline toml::Document config_to_toml(const PipelineConfig& c) {
  using namespace config_detail;
  toml::Document doc;
  const auto& m = c.model;
  doc[""] = {{"seed", count(c.seed)}, {"precision", str(to_string(c.precision))}};
  doc["paths"] = {{"events", str(c.paths.events)},
                  {"features", str(c.paths.features)},
                  {"output_dir", str(c.paths.output_dir)},
                  {"teacher_checkpoint", str(c.paths.teacher_checkpoint)},
                  {"student_checkpoint", str(c.paths.student_checkpoint)},
                  {"resume_checkpoint", str(c.paths.resume_checkpoint)}};
  auto& g = doc["graph"];
  if (c.graph.window_begin) g["window_begin"] = {*c.graph.window_begin};
  if (c.graph.window_end) g["window_end"] = {*c.graph.window_end};
  g["validation_fraction"] = num(c.graph.validation_fraction);
  g["pairing"] = str(m.pairing.mode == PairingConfig::Mode::Window ? "window" : "session");
  g["session_gap_minutes"] = {m.pairing.session_gap_minutes};
  const auto& sc = m.contrastive.sampler;
  doc["sampler"] = {{"batch_size", count(sc.batch_size)},
                    {"num_neighbors", counts(sc.num_neighbors)},
                    {"weighted", {sc.weighted}}};
  const auto& ct = m.contrastive;
  toml::Array gamma;
  for (double x : ct.gamma) gamma.push_back(num(x));
  doc["teacher"] = {{"dims", counts(m.teacher_dims)},
                    {"neighborhood_agg", str(to_string(m.neighborhood_agg))},
                    {"relation_agg", str(to_string(m.relation_agg))},
                    {"learning_rate", num(ct.sgd.learning_rate)},
                    {"weight_decay", num(ct.sgd.weight_decay)},
                    {"epochs_max", count(ct.epochs_max)},
                    {"patience", count(ct.patience)},
                    {"workers", count(ct.workers)},
                    {"normalize_weights", {ct.normalize_weights}},
                    {"gamma", {gamma}}};
  const auto& d = m.distill;
  doc["student"] = {{"dims", counts(d.student_dims)},
                    {"learning_rate", num(d.sgd.learning_rate)},
                    {"weight_decay", num(d.sgd.weight_decay)},
                    {"epochs", count(d.epochs)},
                    {"patience", count(d.patience)},
                    {"batch_size", count(d.batch_size)},
                    {"holdout_fraction", num(d.holdout_fraction)},
                    {"resample_targets", {d.resample_targets}},
                    {"standardize_targets", {d.standardize_targets}}};
  const auto& p = m.personalization;
  doc["personalization"] = {{"alpha", num(p.alpha)},
                            {"margin", num(p.margin)},
                            {"learning_rate", num(p.sgd.learning_rate)},
                            {"weight_decay", num(p.sgd.weight_decay)},
                            {"adapt_every", count(p.adapt_every)},
                            {"base_steps", count(p.base_steps)},
                            {"k", count(p.k)},
                            {"exclude", str(to_string(p.exclude))},
                            {"negatives_capacity", count(p.negatives_capacity)},
                            {"ema_window", count(p.ema_window)},
                            {"adapt", {p.adapt}}};
  const auto& s = c.scenario;
  toml::Array configs, seeds;
  for (const auto& x : s.configurations) configs.push_back(str(x));
  for (auto x : s.seeds) seeds.push_back(count(x));
  doc["scenario"] = {{"mode", str(to_string(s.mode))},
                     {"weeks", count(s.weeks)},
                     {"k", count(s.k)},
                     {"t", count(s.t)},
                     {"train_days", count(s.train_days)},
                     {"validation_fraction", num(s.validation_fraction)},
                     {"window_anchor", str(to_string(s.window_anchor))},
                     {"configurations", {configs}},
                     {"seeds", {seeds}},
                     {"threads", count(s.threads)}};
  const auto& y = c.synthetic;
  doc["synthetic"] = {{"n_users", count(y.n_users)},
                      {"n_items", count(y.n_items)},
                      {"n_clusters", count(y.n_clusters)},
                      {"feature_dim", count(y.feature_dim)},
                      {"days", count(y.days)},
                      {"events_per_user_per_day", count(y.events_per_user_per_day)},
                      {"preference_sharpness", num(y.preference_sharpness)},
                      {"signal_dims", count(y.signal_dims)},
                      {"prototype_scale", num(y.prototype_scale)},
                      {"feature_noise", num(y.feature_noise)},
                      {"style_strength", num(y.style_strength)},
                      {"explore_prob", num(y.explore_prob)},
                      {"active_prob", num(y.active_prob)},
                      {"start_timestamp", {y.start_timestamp}}};
  doc["serve"] = {{"transport", str(c.serve.transport == Transport::Stdio ? "stdio" : "tcp")},
                  {"host", str(c.serve.host)},
                  {"port", count(static_cast<std::uint64_t>(c.serve.port))},
                  {"threads", count(c.serve.threads)}};
  return doc;
}

inline void PipelineConfig::validate() const {
  auto wrap = [](const char* section, const std::function<void()>& f) {
    try {
      f();
    } catch (const InputError& e) {
      throw ConfigError(std::string("[") + section + "] " + e.what());
    }
  };
  wrap("teacher", [&] { model.contrastive.validate(); });
  wrap("student", [&] { model.distill.validate(); });
  wrap("personalization", [&] { model.personalization.validate(); });
  wrap("scenario", [&] { scenario.validate(); });
  wrap("synthetic", [&] { synthetic.validate(); });
  if (!(graph.validation_fraction >= 0.0 && graph.validation_fraction < 1.0)) {
    throw ConfigError("[graph] validation_fraction must be in [0, 1)");
  }
  if (graph.window_begin && graph.window_end && *graph.window_end <= *graph.window_begin) {
    throw ConfigError("[graph] window_end must be after window_begin");
  }
  if (model.pairing.session_gap_minutes < 0) throw ConfigError("[graph] session_gap_minutes must be >= 0");
  if (serve.port < 0 || serve.port > 65535) throw ConfigError("[serve] port out of range");
  if (model.teacher_dims.size() == 1) throw ConfigError("[teacher] dims needs >= 2 entries");
  if (model.distill.student_dims.size() == 1) throw ConfigError("[student] dims needs >= 2 entries");
}

inline PipelineConfig parse_config(std::istream& in) { return config_from_toml(toml::parse(in)); }
inline PipelineConfig parse_config(std::string_view text) {
  return config_from_toml(toml::parse(text));
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in);
}

inline std::string serialize_config(const PipelineConfig& c) {
  std::ostringstream os;
  toml::write(os, config_to_toml(c));
  return os.str();
}

}  // namespace grec
