#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "grec/eval/scenario.hpp"
#include "grec/eval/synthetic.hpp"
#include "grec/graph/events.hpp"
#include "grec/graph/features.hpp"
#include "grec/graph/hetero_graph.hpp"
#include "grec/graph/node_features.hpp"
#include "grec/numeric/checkpoint.hpp"
#include "grec/pipeline/config.hpp"
#include "grec/pipeline/serve.hpp"
#include "grec/student/distill.hpp"
#include "grec/teacher/train.hpp"

namespace grec {

inline constexpr std::size_t kStudentBudgetBytes = 700 * 1024;

namespace cmd_detail {

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is not set");
  if (!std::filesystem::is_regular_file(path)) throw ConfigError(what + " '" + path + "' does not exist");
}

inline std::ifstream open_in(const std::string& path, const std::string& what) {
  require_file(path, what);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + what + " '" + path + "'");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

inline std::vector<Event> load_events(const std::string& path, std::size_t* malformed = nullptr) {
  auto in = open_in(path, "events");
  auto r = ingest_events(in, event_format_for_path(path));
  for (const auto& e : r.errors) std::cerr << "events line " << e.line << ": " << e.message << '\n';
  if (malformed) *malformed = r.errors.size();
  return std::move(r.events);
}

template <typename T>
FeatureStore<T> load_feature_file(const std::string& path) {
  auto in = open_in(path, "features");
  return load_features<T>(in);
}

inline HeteroGraph load_graph_file(const std::string& path, const std::string& what) {
  auto in = open_in(path, what);
  return load_graph(in);
}

inline nlohmann::json graph_stats(const HeteroGraph& g) {
  nlohmann::json j{{"nodes", g.num_nodes()}};
  for (auto t : kAllInteractionTypes) j[std::string(relation_name(t)) + "_edges"] = g.num_edges(t);
  return j;
}

}  // namespace cmd_detail

// Writes the synthetic events, features and item cluster labels.
inline nlohmann::json cmd_simulate_data(const PipelineConfig& cfg) {
  using namespace cmd_detail;
  auto sc = cfg.synthetic;
  sc.seed = cfg.seed;
  const auto ds = generate_synthetic_dataset(sc);
  if (cfg.paths.events.empty() || cfg.paths.features.empty()) {
    throw ConfigError("simulate-data needs paths.events and paths.features");
  }
  {
    auto out = open_out(cfg.paths.events);
    if (event_format_for_path(cfg.paths.events) == EventFormat::Jsonl) {
      write_events_jsonl(out, ds.events);
    } else {
      write_events_csv(out, ds.events);
    }
  }
  {
    auto out = open_out(cfg.paths.features);
    save_features_binary(out, ds.features);
  }
  const auto labels = cfg.paths.out("item_clusters.csv");
  {
    auto out = open_out(labels);
    out << "item_id,cluster\n";
    for (std::uint32_t i = 0; i < ds.features.size(); ++i) {
      out << ds.features.id(i) << ',' << ds.item_cluster[i] << '\n';
    }
  }
  return {{"command", "simulate-data"},     {"events", ds.events.size()},
          {"items", ds.features.size()},    {"users", sc.n_users},
          {"events_path", cfg.paths.events}, {"features_path", cfg.paths.features},
          {"labels_path", labels}};
}

// Builds the training graph and the validation graph of held-out users.
inline nlohmann::json cmd_build_graph(const PipelineConfig& cfg) {
  using namespace cmd_detail;
  std::size_t malformed = 0;
  const auto events = load_events(cfg.paths.events, &malformed);
  std::vector<Event> train, validation;
  for (const auto& e : events) {
    (is_validation_user(e.user_id, cfg.graph.validation_fraction, cfg.seed) ? validation : train)
        .push_back(e);
  }
  const auto g = build_cointeraction_graph(train, cfg.graph.window(), cfg.model.pairing);
  const auto vg = build_cointeraction_graph(validation, cfg.graph.window(), cfg.model.pairing);
  {
    auto out = open_out(cfg.paths.graph());
    save_graph(out, g);
  }
  {
    auto out = open_out(cfg.paths.validation_graph());
    save_graph(out, vg);
  }
  auto stats = graph_stats(g);
  stats["command"] = "build-graph";
  stats["events"] = events.size();
  stats["malformed_lines"] = malformed;
  stats["validation"] = graph_stats(vg);
  stats["graph_path"] = cfg.paths.graph();
  write_json(cfg.paths.out("graph_stats.json"), stats);
  return stats;
}

template <typename T>
nlohmann::json cmd_train(const PipelineConfig& cfg) {
  using namespace cmd_detail;
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = seeded(cfg.model, cfg.seed);
  const auto g = load_graph_file(cfg.paths.graph(), "graph (run build-graph first)");
  const auto vg = load_graph_file(cfg.paths.validation_graph(), "validation graph");
  const auto features = load_feature_file<T>(cfg.paths.features);
  const auto x = align_features(g, features).rows;
  const auto vx = align_features(vg, features).rows;
  const auto dims = resolve_teacher_dims(m, features.dim());

  TrainOptions<T> opts;
  if (!cfg.paths.resume_checkpoint.empty()) {
    auto in = open_in(cfg.paths.resume_checkpoint, "resume checkpoint");
    opts.initial = load_hgnn<T>(in);
    auto meta_in = open_in(cfg.paths.resume_checkpoint + ".json", "resume checkpoint metadata");
    opts.start_epoch = nlohmann::json::parse(meta_in).at("epochs_completed").get<std::size_t>();
  }
  const auto log_path = cfg.paths.out("train_log.jsonl");
  auto log = open_out(log_path);
  opts.on_epoch = [&](const EpochLog& e, const HgnnParams<T>&) { log << to_json(e).dump() << '\n' << std::flush; };
  const auto r = train_structural_encoder<T>(g, x, dims, m.neighborhood_agg, m.relation_agg,
                                             m.contrastive, vg, vx, opts);
  const auto epochs_completed = opts.start_epoch + r.log.size();
  {
    auto out = open_out(cfg.paths.teacher());
    save_hgnn(out, r.best);
  }
  const auto last_path = cfg.paths.out("teacher_last.grec");
  {
    auto out = open_out(last_path);
    save_hgnn(out, r.last);
  }
  write_json(last_path + ".json", {{"epochs_completed", epochs_completed}});
  return {{"command", "train"},
          {"teacher_path", cfg.paths.teacher()},
          {"last_path", last_path},
          {"log_path", log_path},
          {"dims", dims},
          {"epochs_run", r.log.size()},
          {"epochs_completed", epochs_completed},
          {"best_epoch", r.best_epoch},
          {"stopped_early", r.stopped_early},
          {"wallclock_ms", ms_since(t0)},
          {"reference_budget", "1.5 h (GPU)"}};
}

template <typename T>
nlohmann::json cmd_distill(const PipelineConfig& cfg) {
  using namespace cmd_detail;
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = seeded(cfg.model, cfg.seed);
  auto teacher_in = open_in(cfg.paths.teacher(), "teacher checkpoint (run train first)");
  const auto teacher = load_hgnn<T>(teacher_in);
  const auto g = load_graph_file(cfg.paths.graph(), "graph (run build-graph first)");
  const auto features = load_feature_file<T>(cfg.paths.features);
  const auto x = align_features(g, features).rows;
  auto dcfg = m.distill;
  dcfg.student_dims = resolve_student_dims(m, features.dim());
  const auto r = distill(g, x, teacher, dcfg, m.contrastive.sampler);
  {
    auto out = open_out(cfg.paths.student());
    save_mlp(out, r.student);
  }
  const auto log_path = cfg.paths.out("distill_log.jsonl");
  {
    auto out = open_out(log_path);
    for (const auto& e : r.log) out << to_json(e).dump() << '\n';
  }
  const auto emb_path = cfg.paths.out("student_embeddings.gemb");
  {
    auto out = open_out(emb_path);
    save_features_binary(out, feature_store_from_rows(features.ids(), project_catalog(r.student, features)),
                         kEmbeddingMagic);
  }
  return {{"command", "distill"},
          {"student_path", cfg.paths.student()},
          {"embeddings_path", emb_path},
          {"dims", dcfg.student_dims},
          {"epochs_run", r.log.size()},
          {"best_epoch", r.best_epoch},
          {"student_bytes", r.checkpoint_bytes},
          {"budget_bytes", kStudentBudgetBytes},
          {"within_budget", r.checkpoint_bytes <= kStudentBudgetBytes},
          {"wallclock_ms", ms_since(t0)}};
}

template <typename T>
nlohmann::json cmd_evaluate(const PipelineConfig& cfg) {
  using namespace cmd_detail;
  const auto t0 = std::chrono::steady_clock::now();
  const auto events = load_events(cfg.paths.events);
  const auto features = load_feature_file<T>(cfg.paths.features);
  const auto reports = run_scenario<T>(cfg.scenario, cfg.model, events, features);
  nlohmann::json all = nlohmann::json::array();
  std::vector<MetricsReport> titled;
  for (const auto& r : reports) {
    auto j = to_json(r);
    j["title"] = configuration_titles().at(r.name);
    write_json(cfg.paths.out("reports/" + r.name + ".json"), j);
    all.push_back(j);
    titled.push_back(r);
    titled.back().name = configuration_titles().at(r.name);
  }
  const nlohmann::json summary{{"scenario", {{"mode", to_string(cfg.scenario.mode)},
                                             {"weeks", cfg.scenario.weeks},
                                             {"k", cfg.scenario.k},
                                             {"t", cfg.scenario.t},
                                             {"window_anchor", to_string(cfg.scenario.window_anchor)},
                                             {"seeds", cfg.scenario.seeds}}},
                               {"reports", all}};
  write_json(cfg.paths.out("report.json"), summary);
  const auto table = format_table(titled);
  {
    auto out = open_out(cfg.paths.out("report.txt"));
    out << table;
  }
  return {{"command", "evaluate"},
          {"report_path", cfg.paths.out("report.json")},
          {"table", table},
          {"configurations", cfg.scenario.configurations},
          {"wallclock_ms", ms_since(t0)}};
}

template <typename T>
std::shared_ptr<const Catalog<T>> load_serving_catalog(const PipelineConfig& cfg) {
  using namespace cmd_detail;
  auto in = open_in(cfg.paths.student(), "student checkpoint (run distill first)");
  auto student = load_mlp<T>(in);
  auto features = load_feature_file<T>(cfg.paths.features);
  if (student.input_dim() != features.dim()) {
    throw ConfigError("student input dim " + std::to_string(student.input_dim()) +
                      " does not match feature dim " + std::to_string(features.dim()));
  }
  return Catalog<T>::create(std::move(features), std::move(student), cfg.serve.threads);
}

// Runs until end of input (stdio) or until `stop` is set (tcp).
template <typename T>
void cmd_serve(const PipelineConfig& cfg, std::istream& in, std::ostream& out,
               const std::atomic<bool>& stop) {
  Server<T> server(load_serving_catalog<T>(cfg), cfg.model.personalization);
  if (cfg.serve.transport == Transport::Stdio) {
    serve_stream(server, in, out);
    return;
  }
  serve_tcp(server, cfg.serve.host, cfg.serve.port, stop, [&](int port) {
    std::cerr << "listening on " << cfg.serve.host << ':' << port << std::endl;
  });
}

}  // namespace grec
