#include <atomic>
#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "grec/pipeline/commands.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

template <typename T>
nlohmann::json run(const std::string& command, const grec::PipelineConfig& cfg) {
  if (command == "build-graph") return grec::cmd_build_graph(cfg);
  if (command == "train") return grec::cmd_train<T>(cfg);
  if (command == "distill") return grec::cmd_distill<T>(cfg);
  if (command == "evaluate") return grec::cmd_evaluate<T>(cfg);
  if (command == "simulate-data") return grec::cmd_simulate_data(cfg);
  grec::cmd_serve<T>(cfg, std::cin, std::cout, g_stop);
  return nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-pretrained, per-user personalized recommendation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> transport;
  std::optional<int> port;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate-data", "Generate the synthetic benchmark events and features"},
      {"build-graph", "Build the co-interaction graphs from the event log"},
      {"train", "Train the structural encoder"},
      {"distill", "Distill the student from the trained encoder"},
      {"evaluate", "Replay the evaluation scenario for every configuration"},
      {"serve", "Serve observe/recommend requests as newline-delimited JSON"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the global seed");
    if (name == "serve") {
      sub->add_option("--transport", transport, "stdio or tcp");
      sub->add_option("--port", port, "TCP port (0 picks a free one)");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  grec::PipelineConfig cfg;
  try {
    if (!config_path.empty()) cfg = grec::load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.scenario.seeds = {*seed};
    }
    if (transport) {
      const auto t = grec::config_detail::parse_transport(*transport);
      if (!t) throw grec::ConfigError("unknown transport '" + *transport + "'");
      cfg.serve.transport = *t;
    }
    if (port) cfg.serve.port = *port;
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  try {
    const auto summary = cfg.precision == grec::Precision::Float64 ? run<double>(command, cfg)
                                                                   : run<float>(command, cfg);
    if (!summary.is_null()) std::cout << summary.dump(2) << '\n';
    return 0;
  } catch (const grec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
