#include <thread>

#include "../common/service_fixture.hpp"
#include "corridrone/http_api.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

using namespace corridrone;
using nlohmann::json;

namespace {

json request_body(double duration = 600.0) {
  return {{"start", {0, 0, 0}},
          {"destination", {3000, 0, 0}},
          {"altitude", 100},
          {"expected_throughput", 60},
          {"desired_duration", duration},
          {"time_of_day", "10:00"}};
}

struct ApiHarness {
  fixtures::ServiceHarness h;
  api::Api api{*h.service, [this](double t) { h.now = t; }};

  std::pair<int, json> call(const std::string& method, const std::string& target,
                            const json& body = nullptr) {
    const auto r = api.handle(method, target, body.is_null() ? "" : body.dump());
    return {r.status, json::parse(r.body)};
  }
};

// Parses "id: N" lines out of an SSE byte stream.
std::vector<std::uint64_t> sse_ids(const std::string& text) {
  std::vector<std::uint64_t> ids;
  std::size_t pos = 0;
  while ((pos = text.find("id: ", pos)) != std::string::npos) {
    if (pos == 0 || text[pos - 1] == '\n') ids.push_back(std::stoull(text.substr(pos + 4)));
    pos += 4;
  }
  return ids;
}

}  // namespace

TEST_CASE("api lifecycle over JSON") {
  ApiHarness a;
  auto [s, b] = a.call("POST", "/missions", request_body());
  REQUIRE(s == 201);
  const std::string id = b["id"];
  CHECK(b["status"] == "Draft");

  std::tie(s, b) = a.call("POST", "/missions/" + id + "/activate", json::object());
  CHECK(s == 409);
  CHECK(b["error"] == "NotAllocated");

  std::tie(s, b) = a.call("POST", "/missions/" + id + "/options", {{"wind", 0}});
  REQUIRE(s == 200);
  CHECK(b["options"].size() == 6);
  CHECK(b["options"][0]["v_bounds"][0] == doctest::Approx(5.0));

  std::tie(s, b) = a.call("POST", "/missions/" + id + "/negotiate", {{"option_id", "O9"}});
  CHECK(s == 404);
  CHECK(b["error"] == "UnknownOption");
  std::tie(s, b) = a.call("POST", "/missions/" + id + "/negotiate", {{"option_id", "O1"}});
  REQUIRE(s == 200);
  CHECK(b["status"] == "Allocated");
  CHECK(b["negotiation"].size() == 1);

  std::tie(s, b) = a.call("POST", "/missions/" + id + "/activate", json::object());
  CHECK(s == 409);
  CHECK(b["error"] == "OutsideWindow");
  std::tie(s, b) = a.call("POST", "/clock", {{"now", fixtures::kMissionStart + 1}});
  CHECK(s == 200);
  std::tie(s, b) = a.call("POST", "/missions/" + id + "/activate", json::object());
  REQUIRE(s == 200);
  CHECK(b["status"] == "Active");

  std::tie(s, b) = a.call("POST", "/missions/" + id + "/step", {{"steps", 50}});
  CHECK(s == 200);
  CHECK(b["sim"]["step"] == 50);
  std::tie(s, b) = a.call("POST", "/missions/" + id + "/step", {{"steps", 0}});
  CHECK(s == 400);
  std::tie(s, b) = a.call("POST", "/missions/" + id + "/commands",
                          {{"type", "CommandLanding"}, {"uav_id", "U9999"}});
  CHECK(s == 404);
  CHECK(b["error"] == "UnknownUAV");

  std::tie(s, b) = a.call("POST", "/missions/" + id + "/complete");
  CHECK(s == 409);
  std::tie(s, b) = a.call("POST", "/missions/" + id + "/commands", {{"type", "AbortMission"}});
  CHECK(s == 200);
  CHECK(b["status"] == "Released");

  std::tie(s, b) = a.call("GET", "/missions/" + id);
  CHECK(b["sealed"] == true);
  CHECK(a.h.server.allocations().empty());

  std::tie(s, b) = a.call("GET", "/missions");
  CHECK(b.size() == 1);
}

TEST_CASE("api error mapping") {
  ApiHarness a;
  auto [s, b] = a.call("GET", "/missions/M0042");
  CHECK(s == 404);
  CHECK(b["error"] == "UnknownMission");
  std::tie(s, b) = a.call("GET", "/nowhere");
  CHECK(s == 404);
  CHECK(b["error"] == "NoRoute");
  auto bad = request_body();
  bad["destination"] = {0, 0, 0};
  std::tie(s, b) = a.call("POST", "/missions", bad);
  CHECK(s == 400);
  CHECK(b["error"] == "ValidationFailed");
  const auto r = a.api.handle("POST", "/missions", "{not json");
  CHECK(r.status == 400);

  std::tie(s, b) = a.call("POST", "/missions", request_body(100.0));
  const std::string id = b["id"];
  std::tie(s, b) = a.call("POST", "/missions/" + id + "/options", json::object());
  CHECK(s == 422);
  CHECK(b["error"] == "Infeasible");
  CHECK(b["details"][0] == "VMinExceedsVMax");
}

TEST_CASE("api stream pages by sequence number") {
  ApiHarness a;
  const auto id = a.h.active();
  a.h.service->step(id, 100);
  auto [s, b] = a.call("GET", "/missions/" + id + "/stream?since=0&limit=3");
  REQUIRE(s == 200);
  REQUIRE(b["entries"].size() == 3);
  CHECK(b["entries"][0]["seq"] == 1);
  CHECK(b["last_seq"] == 3);
  std::uint64_t since = b["last_seq"];
  std::uint64_t expected = 4;
  while (true) {
    std::tie(s, b) = a.call("GET", "/missions/" + id + "/stream?since=" + std::to_string(since) + "&limit=4");
    if (b["entries"].empty()) break;
    for (const auto& e : b["entries"]) CHECK(e["seq"] == expected++);
    since = b["last_seq"];
  }
  CHECK(since == a.h.service->record(id).at("last_seq").get<std::uint64_t>());
}

TEST_CASE("http server: requests and a resumable event stream") {
  ApiHarness a;
  api::HttpServer server(a.api, "127.0.0.1", 0);
  REQUIRE(server.port() > 0);
  httplib::Client cli("127.0.0.1", server.port());
  cli.set_read_timeout(10, 0);

  auto res = cli.Get("/health");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");

  res = cli.Post("/missions", request_body().dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  const std::string id = json::parse(res->body)["id"];
  res = cli.Post("/missions/" + id + "/options", "{}", "application/json");
  CHECK(res->status == 200);
  res = cli.Post("/missions/" + id + "/negotiate", R"({"option_id":"O1"})", "application/json");
  CHECK(res->status == 200);
  res = cli.Post("/clock", json{{"now", fixtures::kMissionStart + 1}}.dump(), "application/json");
  CHECK(res->status == 200);
  res = cli.Post("/missions/" + id + "/activate", "{}", "application/json");
  CHECK(res->status == 200);
  res = cli.Post("/missions/" + id + "/step", R"({"steps":30})", "application/json");
  CHECK(res->status == 200);

  // A subscriber resumes after seq 2 and stays attached while the mission
  // continues; the stream ends once the record is sealed.
  std::string received;
  std::thread subscriber([&] {
    httplib::Client sse("127.0.0.1", server.port());
    sse.set_read_timeout(20, 0);
    sse.Get("/missions/" + id + "/events", {{"Last-Event-ID", "2"}},
            [&](const char* data, std::size_t len) {
              received.append(data, len);
              return true;
            });
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  res = cli.Post("/missions/" + id + "/step", R"({"steps":30})", "application/json");
  CHECK(res->status == 200);
  res = cli.Post("/missions/" + id + "/commands", R"({"type":"AbortMission"})", "application/json");
  CHECK(res->status == 200);
  subscriber.join();

  const auto ids = sse_ids(received);
  const auto last = a.h.service->record(id).at("last_seq").get<std::uint64_t>();
  REQUIRE(!ids.empty());
  CHECK(ids.front() == 3);
  CHECK(ids.back() == last);
  for (std::size_t i = 1; i < ids.size(); ++i) CHECK(ids[i] == ids[i - 1] + 1);
  CHECK(received.find("event: Sealed") != std::string::npos);

  // Query-parameter resume on a finished mission replays the tail and closes.
  std::string tail;
  httplib::Client again("127.0.0.1", server.port());
  again.Get("/missions/" + id + "/events?since=" + std::to_string(last - 2), httplib::Headers{},
            [&](const char* data, std::size_t len) {
              tail.append(data, len);
              return true;
            });
  CHECK(sse_ids(tail) == std::vector<std::uint64_t>{last - 1, last});

  res = cli.Get("/missions/M9999/events");
  REQUIRE(res);
  CHECK(res->status == 404);
  server.stop();
}
