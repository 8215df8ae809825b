#include <pthread.h>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "corridrone/corridrone.h"
#include "json.hpp"

using nlohmann::json;

namespace {

// Exit codes: 0 ok, 1 infeasible, 2 validation, 3 transport. Other library
// failures (unknown ids, conflicts, I/O, internal) report as validation.
int exit_code(cd_status s) {
  switch (s) {
    case CD_OK: return 0;
    case CD_INFEASIBLE: return 1;
    case CD_TRANSPORT: return 3;
    default: return 2;
  }
}

int report_failure(cd_status s) {
  std::cerr << "error: " << cd_last_error() << "\n";
  const auto err = json::parse(cd_last_error_json(), nullptr, false);
  if (err.is_object())
    for (const auto& d : err.value("details", json::array())) std::cerr << "  - " << d.get<std::string>() << "\n";
  return exit_code(s);
}

bool read_text(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot read " << path << "\n";
    return false;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

std::string take(char* s) {
  std::string out = s ? s : "";
  cd_string_free(s);
  return out;
}

std::string fixed(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string layout_name(const json& plan) {
  const auto& l = plan.at("layout");
  return l.is_object() ? l.value("kind", "?") : l.get<std::string>();
}

std::string distribution_name(const json& plan) {
  const auto& d = plan.at("distribution");
  return d.is_string() ? d.get<std::string>() : "Custom";
}

void print_table(const json& doc) {
  std::printf("%-4s %-14s %-8s %-15s %-4s %10s %8s %12s %6s\n", "id", "layout", "dist",
              "v_bounds [m/s]", "cl", "capacity/h", "coupled", "volume [m3]", "score");
  for (const auto& o : doc.at("options")) {
    const auto& p = o.at("lane_plan");
    const auto& v = o.at("v_bounds");
    std::printf("%-4s %-14s %-8s %-15s %-4s %10s %8d %12s %6s\n",
                o.at("id").get<std::string>().c_str(), layout_name(p).c_str(),
                distribution_name(p).c_str(),
                (fixed(v.at(0).get<double>(), 2) + ".." + fixed(v.at(1).get<double>(), 2)).c_str(),
                o.at("required_cl").get<std::string>().c_str(),
                fixed(o.at("capacity").get<double>(), 1).c_str(), o.at("coupled_pairs").get<int>(),
                fixed(o.at("volume").get<double>(), 0).c_str(),
                fixed(o.at("score").get<double>(), 3).c_str());
  }
  for (const auto& o : doc.at("options"))
    std::printf("%s: %s\n", o.at("id").get<std::string>().c_str(),
                o.value("rationale", "").c_str());
}

sigset_t stop_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  return set;
}

// Call before any thread starts so that every thread inherits the mask.
void block_stop_signals() {
  const auto set = stop_signals();
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

// Runs `on_signal` when SIGINT or SIGTERM arrives.
std::thread signal_watcher(std::function<void()> on_signal) {
  return std::thread([set = stop_signals(), on_signal] {
    int sig = 0;
    sigwait(&set, &sig);
    on_signal();
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drone corridor planner, simulator and ground control service"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cd_version()));

  std::string plan_file, plan_config;
  bool plan_json = false;
  auto* plan = app.add_subcommand("plan", "Ranked corridor options for a mission request");
  plan->add_option("request", plan_file, "Plan file {request, environment?, zones?}")->required();
  plan->add_option("--config", plan_config, "Service config file");
  plan->add_flag("--json", plan_json, "Print the options as JSON");

  std::string sim_file, sim_out = "out";
  auto* simulate = app.add_subcommand("simulate", "Headless traffic simulation of a scenario");
  simulate->add_option("scenario", sim_file, "Scenario file")->required();
  simulate->add_option("--out", sim_out, "Output directory");

  std::string serve_config, serve_host = "127.0.0.1", serve_utm;
  int serve_port = 8080;
  double serve_rate = 1.0;
  auto* serve = app.add_subcommand("serve", "Mission service API with embedded simulation");
  serve->add_option("--config", serve_config, "Service config file");
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--port", serve_port, "Port (0 picks one)");
  serve->add_option("--utm", serve_utm, "UTM endpoint host:port (default: embedded)");
  serve->add_option("--rate", serve_rate, "Simulation speed relative to wall clock (0 = manual stepping)");

  std::string utm_registry, utm_host = "127.0.0.1", utm_cost;
  int utm_port = 7400;
  auto* utm = app.add_subcommand("utm-serve", "Mock UTM authority");
  utm->add_option("--port", utm_port, "Port (0 picks one)");
  utm->add_option("--host", utm_host, "Bind address");
  utm->add_option("--registry", utm_registry, "Registry file, reloaded on start")->required();
  utm->add_option("--cost", utm_cost, "Cost model file {c0, alpha, beta, buffer}");

  std::string replay_file;
  bool replay_report = false;
  auto* replay = app.add_subcommand("replay", "Rebuild a mission record from its journal");
  replay->add_option("journal", replay_file, "Mission journal (.journal.jsonl)")->required();
  replay->add_flag("--report", replay_report, "Print only the final mission report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (plan->parsed()) {
    std::string text, config;
    if (!read_text(plan_file, text)) return 2;
    if (!plan_config.empty() && !read_text(plan_config, config)) return 2;
    char* out = nullptr;
    const auto s = cd_plan(text.c_str(), plan_config.empty() ? nullptr : config.c_str(), &out);
    if (s != CD_OK) return report_failure(s);
    const auto doc = json::parse(take(out));
    if (plan_json)
      std::cout << doc.dump(2) << "\n";
    else
      print_table(doc);
    return 0;
  }

  if (simulate->parsed()) {
    std::string text;
    if (!read_text(sim_file, text)) return 2;
    char* metrics = nullptr;
    const auto s = cd_simulate(text.c_str(), sim_out.c_str(), &metrics);
    if (s != CD_OK) return report_failure(s);
    std::cout << take(metrics);
    return 0;
  }

  if (replay->parsed()) {
    char* out = nullptr;
    const auto s = cd_replay_journal(replay_file.c_str(), &out);
    if (s != CD_OK) return report_failure(s);
    const auto record = json::parse(take(out));
    std::cout << (replay_report ? record.value("report", json()) : record).dump(2) << "\n";
    return 0;
  }

  if (serve->parsed() || utm->parsed()) block_stop_signals();

  if (serve->parsed()) {
    std::string config = "{}";
    if (!serve_config.empty() && !read_text(serve_config, config)) return 2;
    cd_service* svc = nullptr;
    auto s = cd_service_create(config.c_str(), serve_utm.empty() ? nullptr : serve_utm.c_str(), &svc);
    if (s != CD_OK) return report_failure(s);
    auto watcher = signal_watcher([svc] { cd_service_stop(svc); });
    int bound = 0;
    s = cd_service_start_http(svc, serve_host.c_str(), serve_port, &bound);
    if (s == CD_OK && serve_rate > 0) s = cd_service_auto_run(svc, serve_rate);
    if (s != CD_OK) {
      const int rc = report_failure(s);
      cd_service_destroy(svc);
      std::exit(rc);
    }
    std::cout << "serving on " << serve_host << ":" << bound << std::endl;
    cd_service_wait(svc);
    pthread_kill(watcher.native_handle(), SIGTERM);
    watcher.join();
    cd_service_destroy(svc);
    return 0;
  }

  if (utm->parsed()) {
    std::string cost;
    if (!utm_cost.empty() && !read_text(utm_cost, cost)) return 2;
    cd_utm_server* srv = nullptr;
    const auto s = cd_utm_server_create(utm_registry.c_str(), utm_host.c_str(), utm_port,
                                        utm_cost.empty() ? nullptr : cost.c_str(), &srv);
    if (s != CD_OK) return report_failure(s);
    auto watcher = signal_watcher([srv] { cd_utm_server_stop(srv); });
    std::cout << "utm listening on " << utm_host << ":" << cd_utm_server_port(srv) << std::endl;
    cd_utm_server_wait(srv);
    pthread_kill(watcher.native_handle(), SIGTERM);
    watcher.join();
    cd_utm_server_destroy(srv);
    return 0;
  }
  return 2;
}
