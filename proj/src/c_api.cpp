#include "corridrone/corridrone.h"

#include <atomic>
#include <condition_variable>
#include <cstring>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "corridrone/error.hpp"
#include "corridrone/gcs_service.hpp"
#include "corridrone/http_api.hpp"
#include "corridrone/io.hpp"
#include "corridrone/traffic_sim.hpp"
#include "corridrone/utm_protocol.hpp"

using namespace corridrone;
using io::json;
using io::ordered_json;

namespace {

thread_local std::string g_error;
thread_local std::string g_error_json = "{}";

cd_status status_of(Errc code) {
  switch (code) {
    case Errc::Infeasible:
    case Errc::NegotiationFailed:
      return CD_INFEASIBLE;
    case Errc::TransportFailure:
      return CD_TRANSPORT;
    case Errc::UnknownMission:
    case Errc::UnknownOption:
    case Errc::UnknownUAV:
    case Errc::UnknownEvent:
    case Errc::UnknownAllocation:
      return CD_NOT_FOUND;
    case Errc::IncompatibleStatus:
    case Errc::OutsideWindow:
    case Errc::NotAllocated:
    case Errc::UAVsStillActive:
    case Errc::OutOfOrderMessage:
    case Errc::ApproveWithoutQuote:
      return CD_CONFLICT;
    case Errc::Io:
      return CD_IO;
    default:
      return CD_VALIDATION;
  }
}

cd_status record(const Error& e) {
  g_error = std::string(to_string(e.code())) + ": " + e.what();
  g_error_json = api::error_body(e);
  return status_of(e.code());
}

template <typename F>
cd_status guarded(F&& f) {
  g_error.clear();
  g_error_json = "{}";
  try {
    f();
    return CD_OK;
  } catch (const Error& e) {
    return record(e);
  } catch (const std::exception& e) {
    g_error = std::string("internal: ") + e.what();
    ordered_json j;
    j["error"] = "Internal";
    j["message"] = e.what();
    j["details"] = ordered_json::array();
    g_error_json = j.dump();
    return CD_INTERNAL;
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

json parse_arg(const char* text, const char* what) {
  if (!text) fail(Errc::ValidationFailed, std::string(what) + " is required", {what});
  return io::parse_text(text, what);
}

// Saves the registry after each change, outside the authority's lock.
class RegistrySaver {
 public:
  RegistrySaver(utm::UtmServer& server, std::string path)
      : server_(server), path_(std::move(path)) {
    server_.set_mutation_observer([this](const std::vector<utm::AllocationRecord>&) {
      std::lock_guard lock(mu_);
      dirty_ = true;
      cv_.notify_all();
    });
    thread_ = std::thread([this] { run(); });
  }
  ~RegistrySaver() {
    server_.set_mutation_observer({});
    {
      std::lock_guard lock(mu_);
      stop_ = true;
      cv_.notify_all();
    }
    thread_.join();
    server_.save(path_);
  }

 private:
  void run() {
    std::unique_lock lock(mu_);
    while (true) {
      cv_.wait(lock, [this] { return dirty_ || stop_; });
      if (stop_) return;
      dirty_ = false;
      lock.unlock();
      try {
        server_.save(path_);
      } catch (const Error&) {
      }
      lock.lock();
    }
  }

  utm::UtmServer& server_;
  std::string path_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool dirty_ = false;
  bool stop_ = false;
  std::thread thread_;
};

utm::CostConfig cost_from(const json& j) {
  utm::CostConfig c;
  if (j.is_null()) return c;
  c.c0 = j.value("c0", c.c0);
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.buffer = j.value("buffer", c.buffer);
  return c;
}

}  // namespace

struct cd_service {
  std::unique_ptr<utm::UtmServer> embedded;
  std::unique_ptr<utm::Transport> transport;
  std::atomic<double> manual_now{0.0};
  bool manual = false;
  std::unique_ptr<gcs::Service> service;
  std::unique_ptr<api::Api> api;
  std::unique_ptr<api::HttpServer> http;
};

struct cd_utm_server {
  utm::UtmServer server;
  std::unique_ptr<RegistrySaver> saver;
  std::unique_ptr<utm::TcpServer> tcp;

  explicit cd_utm_server(utm::CostConfig cfg) : server(cfg) {}
};

extern "C" {

const char* cd_version(void) { return "1.0.0"; }
const char* cd_last_error(void) { return g_error.c_str(); }
const char* cd_last_error_json(void) { return g_error_json.c_str(); }
void cd_string_free(char* s) { std::free(s); }

cd_status cd_plan(const char* plan_json, const char* config_json, char** options_json) {
  return guarded([&] {
    const auto doc = parse_arg(plan_json, "plan");
    const auto cfg = gcs::service_config_from(config_json ? io::parse_text(config_json, "config")
                                                          : json());
    io::check_version(doc);
    const json req_json = doc.contains("request") ? doc.at("request") : doc;
    const auto req = gcs::request_from(req_json, cfg.origin);
    gcs::Environment env;
    if (doc.contains("environment")) env.wind = doc.at("environment").value("wind", 0.0);
    auto zones = cfg.zones;
    const auto extra = io::zones_from(doc.value("zones", json()), "zones");
    zones.insert(zones.end(), extra.begin(), extra.end());
    ordered_json out;
    out["request"] = gcs::to_json(req);
    out["options"] = ordered_json::array();
    for (const auto& o : gcs::generate_options(req, env, zones, cfg))
      out["options"].push_back(gcs::to_json(o));
    put(options_json, out.dump(2) + "\n");
  });
}

cd_status cd_simulate(const char* scenario_json, const char* out_dir, char** metrics_json) {
  return guarded([&] {
    const auto doc = parse_arg(scenario_json, "scenario");
    if (!out_dir) fail(Errc::ValidationFailed, "out_dir is required", {"out_dir"});
    const auto sc = io::sim_scenario_from(doc);
    const auto report = sim::run_scenario(sc.plan, sc.cfg, sc.injections, sc.zones);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) fail(Errc::Io, std::string("cannot create ") + out_dir + ": " + ec.message());
    const std::filesystem::path dir(out_dir);
    std::string events;
    for (const auto& e : report.event_log) events += sim::format_event_line(e) + "\n";
    io::write_file((dir / "events.jsonl").string(), events);
    io::write_file((dir / "telemetry.csv").string(), sim::format_telemetry_csv(report.telemetry));
    const auto metrics = sim::format_metrics_json(report.metrics) + "\n";
    io::write_file((dir / "metrics.json").string(), metrics);
    put(metrics_json, metrics);
  });
}

cd_status cd_replay_journal(const char* journal_path, char** record_json) {
  return guarded([&] {
    if (!journal_path) fail(Errc::ValidationFailed, "journal path is required", {"journal"});
    put(record_json, gcs::replay_journal_file(journal_path).dump(2) + "\n");
  });
}

cd_status cd_service_create(const char* config_json, const char* utm_endpoint, cd_service** out) {
  return guarded([&] {
    if (!out) fail(Errc::ValidationFailed, "out is required", {"out"});
    *out = nullptr;
    const json doc = config_json ? io::parse_text(config_json, "config") : json::object();
    const auto cfg = gcs::service_config_from(doc);
    auto svc = std::make_unique<cd_service>();
    if (utm_endpoint && *utm_endpoint) {
      const std::string ep = utm_endpoint;
      const auto colon = ep.rfind(':');
      if (colon == std::string::npos)
        fail(Errc::ValidationFailed, "UTM endpoint must be host:port", {"utm"});
      int port = 0;
      try {
        port = std::stoi(ep.substr(colon + 1));
      } catch (const std::exception&) {
        fail(Errc::ValidationFailed, "UTM endpoint must be host:port", {"utm"});
      }
      svc->transport = std::make_unique<utm::TcpTransport>(ep.substr(0, colon), port);
    } else {
      svc->embedded = std::make_unique<utm::UtmServer>(cost_from(doc.value("cost", json())),
                                                       cfg.zones);
      svc->transport = std::make_unique<utm::InProcessTransport>(*svc->embedded);
    }
    gcs::Service::Clock clock;
    std::function<void(double)> set_clock;
    const auto c = doc.value("clock", json("system"));
    if (c.is_object() && c.value("mode", "system") == "manual") {
      svc->manual = true;
      svc->manual_now = c.value("now", 0.0);
      auto* raw = svc.get();
      clock = [raw] { return raw->manual_now.load(); };
      set_clock = [raw](double t) { raw->manual_now = t; };
    } else if (!(c.is_string() && c == "system")) {
      fail(Errc::ValidationFailed, "clock must be \"system\" or {\"mode\": \"manual\"}", {"clock"});
    }
    svc->service = std::make_unique<gcs::Service>(cfg, *svc->transport, clock);
    svc->api = std::make_unique<api::Api>(*svc->service, set_clock);
    *out = svc.release();
  });
}

cd_status cd_service_call(cd_service* svc, const char* method, const char* target,
                          const char* body, int* http_status, char** response_json) {
  return guarded([&] {
    if (!svc || !method || !target) fail(Errc::ValidationFailed, "service, method and target are required");
    const auto r = svc->api->handle(method, target, body ? body : "");
    if (http_status) *http_status = r.status;
    put(response_json, r.body);
    if (r.status >= 400) {
      const auto j = json::parse(r.body);
      const auto code = errc_from(j.value("error", ""));
      std::vector<std::string> details;
      for (const auto& d : j.value("details", json::array())) details.push_back(d.get<std::string>());
      // NoRoute has no library code.
      throw Error(code.value_or(Errc::UnknownMission), j.value("message", ""), details);
    }
  });
}

cd_status cd_service_start_http(cd_service* svc, const char* host, int port, int* bound_port) {
  return guarded([&] {
    if (!svc) fail(Errc::ValidationFailed, "service is required");
    if (svc->http) fail(Errc::IncompatibleStatus, "HTTP server already running");
    svc->http = std::make_unique<api::HttpServer>(*svc->api, host ? host : "127.0.0.1", port);
    if (bound_port) *bound_port = svc->http->port();
  });
}

cd_status cd_service_auto_run(cd_service* svc, double real_time_factor) {
  return guarded([&] {
    if (!svc) fail(Errc::ValidationFailed, "service is required");
    svc->service->start_auto_run(real_time_factor);
  });
}

void cd_service_wait(cd_service* svc) {
  if (svc && svc->http) svc->http->wait();
}

void cd_service_stop(cd_service* svc) {
  if (!svc) return;
  if (svc->http) svc->http->stop();
  svc->service->stop_auto_run();
}

void cd_service_destroy(cd_service* svc) {
  if (!svc) return;
  cd_service_stop(svc);
  svc->http.reset();
  delete svc;
}

cd_status cd_utm_server_create(const char* registry_path, const char* host, int port,
                               const char* cost_json, cd_utm_server** out) {
  return guarded([&] {
    if (!out) fail(Errc::ValidationFailed, "out is required", {"out"});
    *out = nullptr;
    const auto cost = cost_from(cost_json ? io::parse_text(cost_json, "cost") : json());
    auto srv = std::make_unique<cd_utm_server>(cost);
    if (registry_path && *registry_path) {
      srv->server.load(registry_path);
      srv->server.save(registry_path);
      srv->saver = std::make_unique<RegistrySaver>(srv->server, registry_path);
    }
    srv->tcp = std::make_unique<utm::TcpServer>(srv->server, port, host ? host : "127.0.0.1");
    *out = srv.release();
  });
}

int cd_utm_server_port(const cd_utm_server* srv) { return srv && srv->tcp ? srv->tcp->port() : -1; }

void cd_utm_server_wait(cd_utm_server* srv) {
  if (srv && srv->tcp) srv->tcp->wait();
}

void cd_utm_server_stop(cd_utm_server* srv) {
  if (srv && srv->tcp) srv->tcp->stop();
}

void cd_utm_server_destroy(cd_utm_server* srv) {
  if (!srv) return;
  cd_utm_server_stop(srv);
  srv->tcp.reset();
  srv->saver.reset();
  delete srv;
}

}  // extern "C"
