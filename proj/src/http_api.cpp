#include "corridrone/http_api.hpp"

#include <chrono>
#include <map>
#include <mutex>

#include "httplib.h"

namespace corridrone::api {

using io::json;
using io::ordered_json;

int http_status(Errc code) {
  switch (code) {
    case Errc::ValidationFailed:
    case Errc::Parse:
    case Errc::PreconditionViolated:
    case Errc::TooFewWaypoints:
    case Errc::DegenerateSegment:
    case Errc::PitchLimitExceeded:
    case Errc::LayoutTooLargeForCorridor:
    case Errc::DistributionLaneMismatch:
    case Errc::ManeuverExitsCorridor:
    case Errc::IncompatibleDirections:
    case Errc::InvalidPlan:
      return 400;
    case Errc::UnknownMission:
    case Errc::UnknownOption:
    case Errc::UnknownUAV:
    case Errc::UnknownEvent:
    case Errc::UnknownAllocation:
      return 404;
    case Errc::IncompatibleStatus:
    case Errc::OutsideWindow:
    case Errc::NotAllocated:
    case Errc::UAVsStillActive:
    case Errc::NegotiationFailed:
    case Errc::OutOfOrderMessage:
    case Errc::ApproveWithoutQuote:
      return 409;
    case Errc::Infeasible:
      return 422;
    case Errc::TransportFailure:
      return 502;
    case Errc::Io:
      return 500;
  }
  return 500;
}

std::string error_body(const Error& e) {
  ordered_json j;
  j["error"] = std::string(to_string(e.code()));
  j["message"] = e.what();
  j["details"] = e.details();
  return j.dump();
}

namespace {

Response ok(const ordered_json& j, int status = 200) { return {status, j.dump()}; }

std::map<std::string, std::string> parse_query(const std::string& q) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos < q.size()) {
    auto amp = q.find('&', pos);
    if (amp == std::string::npos) amp = q.size();
    const auto item = q.substr(pos, amp - pos);
    const auto eq = item.find('=');
    if (eq == std::string::npos) out[item] = "";
    else out[item.substr(0, eq)] = item.substr(eq + 1);
    pos = amp + 1;
  }
  return out;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos < path.size()) {
    auto slash = path.find('/', pos);
    if (slash == std::string::npos) slash = path.size();
    if (slash > pos) parts.push_back(path.substr(pos, slash - pos));
    pos = slash + 1;
  }
  return parts;
}

std::uint64_t query_u64(const std::map<std::string, std::string>& q, const std::string& key,
                        std::uint64_t fallback) {
  auto it = q.find(key);
  if (it == q.end() || it->second.empty()) return fallback;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    fail(Errc::ValidationFailed, key + " must be a non-negative integer", {key});
  }
}

ordered_json uav_json(const sim::UAVState& u) {
  ordered_json j;
  j["uav_id"] = u.id;
  j["lane"] = u.lane_id;
  j["progress"] = u.progress;
  j["lateral"] = u.lateral;
  j["vertical"] = u.vertical;
  j["speed"] = u.speed;
  j["mode"] = sim::to_string(u.mode);
  j["health"] = sim::to_string(u.health);
  j["cl"] = fence::to_string(u.cl);
  return j;
}

struct NoRoute {
  std::string what;
};

[[noreturn]] void not_found(const std::string& method, const std::string& path) {
  throw NoRoute{method + " " + path};
}

}  // namespace

Api::Api(gcs::Service& service, std::function<void(double)> set_clock)
    : service_(service), set_clock_(std::move(set_clock)) {}

Response Api::handle(const std::string& method, const std::string& target,
                     const std::string& body) {
  try {
    const auto qpos = target.find('?');
    const auto path = target.substr(0, qpos);
    const auto query = qpos == std::string::npos ? std::map<std::string, std::string>{}
                                                 : parse_query(target.substr(qpos + 1));
    json j = body.empty() ? json::object() : io::parse_text(body, "request body");
    return route(method, path, query, j);
  } catch (const NoRoute& r) {
    ordered_json j;
    j["error"] = "NoRoute";
    j["message"] = "no route for " + r.what;
    j["details"] = ordered_json::array();
    return {404, j.dump()};
  } catch (const Error& e) {
    const auto code = e.code() == Errc::Parse ? Errc::ValidationFailed : e.code();
    return {http_status(code), error_body(Error(code, e.what(), e.details()))};
  } catch (const std::exception& e) {
    return {500, error_body(Error(Errc::Io, std::string("internal error: ") + e.what()))};
  }
}

Response Api::route(const std::string& method, const std::string& path,
                    const std::map<std::string, std::string>& query, const json& body) {
  const auto parts = split_path(path);
  const bool get = method == "GET", post = method == "POST";
  if (parts.size() == 1 && parts[0] == "health" && get) return ok({{"ok", true}});
  if (parts.size() == 1 && parts[0] == "clock") {
    if (get) return ok({{"now", service_.now()}});
    if (post) {
      if (!set_clock_)
        fail(Errc::IncompatibleStatus, "the mission clock is not manual", {"clock"});
      if (!body.contains("now") || !body.at("now").is_number())
        fail(Errc::ValidationFailed, "now must be a number", {"now"});
      set_clock_(body.at("now").get<double>());
      return ok({{"now", service_.now()}});
    }
  }
  if (parts.empty() || parts[0] != "missions") not_found(method, path);

  if (parts.size() == 1) {
    if (get) {
      ordered_json list = ordered_json::array();
      for (const auto& id : service_.mission_ids())
        list.push_back({{"id", id}, {"status", gcs::to_string(service_.status(id))}});
      return ok(list);
    }
    if (post) {
      const auto req = gcs::request_from(body, service_.config().origin);
      const auto id = service_.ingest_mission(req);
      return ok({{"id", id}, {"status", gcs::to_string(service_.status(id))}}, 201);
    }
    not_found(method, path);
  }

  const auto& id = parts[1];
  auto status_json = [&] {
    ordered_json j;
    j["id"] = id;
    j["status"] = gcs::to_string(service_.status(id));
    return j;
  };
  if (parts.size() == 2 && get) return ok(service_.record(id));
  if (parts.size() != 3) not_found(method, path);
  const auto& action = parts[2];

  if (post && action == "options") {
    gcs::Environment env;
    if (body.contains("wind")) {
      if (!body.at("wind").is_number()) fail(Errc::ValidationFailed, "wind must be a number", {"wind"});
      env.wind = body.at("wind").get<double>();
    }
    const auto zones = io::zones_from(body.value("zones", json()), "zones");
    ordered_json list = ordered_json::array();
    for (const auto& o : service_.generate_options(id, env, zones)) list.push_back(gcs::to_json(o));
    auto j = status_json();
    j["options"] = std::move(list);
    return ok(j);
  }
  if (post && action == "negotiate") {
    const auto option = body.value("option_id", std::string());
    const auto rec = service_.select_and_negotiate(id, option);
    auto j = status_json();
    j["allocation"] = utm::to_json(rec);
    j["negotiation"] = service_.record(id).at("negotiation");
    return ok(j);
  }
  if (post && action == "activate") {
    std::optional<sim::SimConfig> cfg;
    if (body.contains("sim")) cfg = io::sim_config_from(json{{"sim", body.at("sim")}});
    service_.activate_and_run(id, cfg);
    return ok(status_json());
  }
  if (post && action == "commands") {
    service_.handle_command(id, gcs::command_from(body));
    return ok(status_json());
  }
  if (post && action == "inject") {
    service_.inject(id, gcs::injection_from(body));
    return ok(status_json());
  }
  if (post && action == "step") {
    int steps = 1;
    if (body.contains("steps")) {
      if (!body.at("steps").is_number_integer() || body.at("steps").get<int>() < 1)
        fail(Errc::ValidationFailed, "steps must be a positive integer", {"steps"});
      steps = body.at("steps").get<int>();
    }
    service_.step(id, steps);
    auto j = status_json();
    j["sim"] = service_.record(id).at("sim");
    return ok(j);
  }
  if (post && action == "complete") return ok(service_.complete_and_release(id));
  if (get && action == "uavs") {
    ordered_json list = ordered_json::array();
    for (const auto& u : service_.uavs(id)) list.push_back(uav_json(u));
    return ok(list);
  }
  if (get && action == "stream") {
    const auto since = query_u64(query, "since", 0);
    const auto limit = query_u64(query, "limit", 1000);
    const auto wait_ms = query_u64(query, "wait_ms", 0);
    if (wait_ms > 0) service_.wait_for_entries(id, since, static_cast<int>(std::min<std::uint64_t>(wait_ms, 30000)));
    ordered_json entries = ordered_json::array();
    std::uint64_t last = since;
    for (const auto& e : service_.entries(id, since, limit)) {
      entries.push_back(gcs::to_json(e));
      last = e.seq;
    }
    auto j = status_json();
    j["entries"] = std::move(entries);
    j["last_seq"] = last;
    return ok(j);
  }
  not_found(method, path);
}

// ---- HTTP ----

struct HttpServer::Impl {
  Api& api;
  httplib::Server server;
  std::thread thread;
  std::atomic_bool stopping{false};
  std::mutex mu;
  std::condition_variable cv;
  bool finished = false;

  explicit Impl(Api& a) : api(a) {}
};

HttpServer::HttpServer(Api& api, const std::string& host, int port)
    : impl_(std::make_unique<Impl>(api)) {
  auto& svr = impl_->server;
  Impl* impl = impl_.get();
  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  svr.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID");
    res.status = 204;
  });

  svr.Get(R"(/missions/([^/]+)/events)", [impl](const httplib::Request& req,
                                               httplib::Response& res) {
    const std::string id = req.matches[1];
    std::uint64_t since = 0;
    try {
      impl->api.service().status(id);
      if (req.has_header("Last-Event-ID")) since = std::stoull(req.get_header_value("Last-Event-ID"));
      else if (req.has_param("since")) since = std::stoull(req.get_param_value("since"));
    } catch (const Error& e) {
      res.status = http_status(e.code());
      res.set_content(error_body(e), "application/json");
      return;
    } catch (const std::exception&) {
      res.status = 400;
      res.set_content(error_body(Error(Errc::ValidationFailed, "bad Last-Event-ID", {"Last-Event-ID"})),
                      "application/json");
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [impl, id, since](std::size_t, httplib::DataSink& sink) mutable {
          auto& service = impl->api.service();
          if (impl->stopping) {
            sink.done();
            return true;
          }
          const auto batch = service.entries(id, since, 500);
          for (const auto& e : batch) {
            const auto frame = "id: " + std::to_string(e.seq) + "\nevent: " + e.type +
                               "\ndata: " + gcs::to_json(e).dump() + "\n\n";
            if (!sink.write(frame.data(), frame.size())) return false;
            since = e.seq;
          }
          if (batch.empty()) {
            if (service.record(id).at("sealed").get<bool>()) {
              sink.done();
              return true;
            }
            if (!service.wait_for_entries(id, since, 1000)) {
              static const std::string keepalive = ": keepalive\n\n";
              if (!sink.write(keepalive.data(), keepalive.size())) return false;
            }
          }
          return true;
        });
  });

  auto forward = [impl](const httplib::Request& req, httplib::Response& res) {
    std::string target = req.path;
    if (!req.params.empty()) {
      target += "?";
      bool first = true;
      for (const auto& [k, v] : req.params) {
        if (!first) target += "&";
        target += k + "=" + v;
        first = false;
      }
    }
    const auto out = impl->api.handle(req.method, target, req.body);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  svr.Get(".*", forward);
  svr.Post(".*", forward);

  if (port == 0) {
    port_ = svr.bind_to_any_port(host);
  } else {
    port_ = svr.bind_to_port(host, port) ? port : -1;
  }
  if (port_ <= 0) fail(Errc::TransportFailure, "cannot listen on " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([impl] {
    impl->server.listen_after_bind();
    std::lock_guard lock(impl->mu);
    impl->finished = true;
    impl->cv.notify_all();
  });
  svr.wait_until_ready();
}

HttpServer::~HttpServer() {
  stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void HttpServer::stop() {
  impl_->stopping = true;
  impl_->server.stop();
}

void HttpServer::wait() {
  std::unique_lock lock(impl_->mu);
  impl_->cv.wait(lock, [&] { return impl_->finished; });
}

}  // namespace corridrone::api
