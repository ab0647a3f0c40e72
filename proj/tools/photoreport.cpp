// photoreport: server, log replay, oracle comparison and simulation.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "photoreport/http_api.hpp"
#include "photoreport/simulator.hpp"
#include "photoreport/tcp_transport.hpp"

using namespace photoreport;
namespace fs = std::filesystem;

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

std::shared_ptr<Predictor> make_predictor(const std::string& spec, const Config& config,
                                          const ClassRegistry& registry) {
  if (spec == "reference") return std::make_shared<ReferencePredictor>(model_from_config(config, registry));
  const std::string prefix = "external:";
  if (spec.rfind(prefix, 0) == 0)
    return std::make_shared<ExternalPredictor>(TcpLineTransport::from_address(spec.substr(prefix.size())), registry,
                                               config.retry_policy());
  throw std::invalid_argument("--predictor must be 'reference' or 'external:HOST:PORT'");
}

void print_recovery(const RecoveryReport& rep) {
  std::cerr << "replayed " << rep.records_applied << " records";
  if (rep.truncated) std::cerr << "; " << rep.warning;
  std::cerr << "\n";
}

int serve(const std::string& store, int port, const std::string& predictor, const Config& config) {
  const auto registry = ClassRegistry::standard();
  Platform platform(registry, make_predictor(predictor, config, registry), config);
  print_recovery(platform.attach_store(store));

  httplib::Server server;
  register_routes(server, platform);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  std::atomic<bool> running{true};
  std::thread ticker([&] {
    while (running) {
      for (const auto& id : platform.tick(platform.now())) std::cerr << "closed " << id << " at deadline\n";
      for (int i = 0; i < config.tick_seconds * 10 && running; ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  });

  std::cerr << "listening on 0.0.0.0:" << port << "\n";
  const bool ok = server.listen("0.0.0.0", port);
  running = false;
  ticker.join();
  g_server = nullptr;
  if (!ok) {
    std::cerr << "cannot listen on port " << port << "\n";
    return 1;
  }
  return 0;
}

int replay(const std::string& store, const Config& config) {
  auto [platform, rep] = recover(store, ClassRegistry::standard(), config);
  print_recovery(rep);
  std::cout << platform->snapshot().dump(2) << "\n";
  return rep.truncated ? 2 : 0;
}

int oracle(const std::string& store, const std::string& task_id, const Config& config) {
  auto [platform, rep] = recover(store, ClassRegistry::standard(), config);
  if (rep.truncated) print_recovery(rep);
  const TaskState st = platform->task_state(task_id);
  const auto& members = st.tree.members();
  Json out{{"task_id", task_id}, {"members", members.size()}, {"tree_groups", st.tree.group_count()}};
  if (members.size() > kMaxOracleVertices) {
    out["oracle_size"] = nullptr;
    out["coverage_ratio"] = nullptr;
    out["note"] = "exact oracle limited to " + std::to_string(kMaxOracleVertices) + " accepted submissions";
  } else if (members.empty()) {
    out["oracle_size"] = 0;
    out["coverage_ratio"] = nullptr;
  } else {
    const auto graph = build_graph(members, st.task.layers, config.match_params());
    const auto mis = max_independent_set(graph);
    Json witness = Json::array();
    for (auto v : mis.witness) witness.push_back(members[v].submission_id);
    out["oracle_size"] = mis.size;
    out["oracle_witness"] = witness;
    out["coverage_ratio"] = coverage_ratio(st.tree.group_count(), mis.size);
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int simulate(const std::string& scenario, const std::string& out_dir, const Config& config) {
  const auto registry = ClassRegistry::standard();
  const auto model = model_from_config(config, registry);
  const auto spec = decode_scenario(read_json_file(scenario), registry);
  const auto stream = generate(spec, model, registry);
  const auto metrics = evaluate(spec, stream, model, registry, config);

  fs::create_directories(out_dir);
  std::ofstream(fs::path(out_dir) / "metrics.jsonl", std::ios::app) << metrics.to_json().dump() << "\n";
  std::ofstream(fs::path(out_dir) / "metrics.txt") << metrics.table();
  std::cout << metrics.table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photo-based event reporting platform"};
  app.require_subcommand(1);
  std::string config_file;
  app.add_option("--config", config_file, "JSON configuration file")->check(CLI::ExistingFile);

  std::string store = "store";
  int port = 8080;
  std::string predictor = "reference";
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  serve_cmd->add_option("--store", store, "Store directory")->required();
  serve_cmd->add_option("--port", port, "TCP port")->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--predictor", predictor, "reference or external:HOST:PORT");

  auto* replay_cmd = app.add_subcommand("replay", "Rebuild state from a store and print it");
  replay_cmd->add_option("--store", store, "Store directory")->required();

  std::string task_id;
  auto* oracle_cmd = app.add_subcommand("oracle", "Compare a task's grouping with the exact optimum");
  oracle_cmd->add_option("--task", task_id, "Task id")->required();
  oracle_cmd->add_option("--store", store, "Store directory");

  std::string scenario, out_dir;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate and evaluate a scenario");
  sim_cmd->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--out", out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const Config config = load_config(config_file.empty() ? std::nullopt : std::optional(config_file));
    if (*serve_cmd) return serve(store, port, predictor, config);
    if (*replay_cmd) return replay(store, config);
    if (*oracle_cmd) return oracle(store, task_id, config);
    if (*sim_cmd) return simulate(scenario, out_dir, config);
  } catch (const ApiError& e) {
    std::cerr << "error: " << e.body().dump() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error:";
    for (const auto& issue : e.issues()) std::cerr << " " << issue << ";";
    std::cerr << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
