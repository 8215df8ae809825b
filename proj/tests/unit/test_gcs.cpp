#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "../common/service_fixture.hpp"
#include "corridrone/error.hpp"

using namespace corridrone;
using namespace corridrone::gcs;
using fixtures::corridor_request;
using fixtures::kMissionStart;
using fixtures::ServiceHarness;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::Io;
}

void run_to_completion(Service& s, const std::string& id) {
  for (int i = 0; i < 200 && !s.uavs(id).empty(); ++i) s.step(id, 100);
  s.step(id, 100);
}

// Poisson arrivals: step until the first UAV is airborne.
void step_until_airborne(Service& s, const std::string& id) {
  for (int i = 0; i < 20000 && s.uavs(id).empty(); ++i) s.step(id, 10);
  REQUIRE(!s.uavs(id).empty());
}

int overlaps(const sim::SimMetrics& m) {
  auto it = m.breach_counts.find(fence::BreachKind::CoreOverlap);
  return it == m.breach_counts.end() ? 0 : it->second;
}

std::vector<std::string> journal_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  std::string l;
  while (std::getline(in, l)) lines.push_back(l);
  return lines;
}

json request_json(double throughput = 60.0) {
  return io::plain(to_json(corridor_request(throughput)));
}

}  // namespace

TEST_CASE("request validation") {
  CHECK_NOTHROW(request_from(request_json(), std::nullopt));
  auto same = request_json();
  same["destination"] = same["start"];
  CHECK(code_of([&] { request_from(same, std::nullopt); }) == Errc::ValidationFailed);
  auto zero = request_json(0.0);
  try {
    request_from(zero, std::nullopt);
    FAIL("accepted zero throughput");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ValidationFailed);
    REQUIRE(e.details().size() == 1);
    CHECK(e.details()[0].rfind("expected_throughput", 0) == 0);
  }
  auto geo = request_json();
  geo["start"] = {{"lat", 52.0}, {"lon", 4.0}};
  CHECK(code_of([&] { request_from(geo, std::nullopt); }) == Errc::ValidationFailed);
  auto clock = request_json();
  clock["time_of_day"] = "10:30";
  CHECK(request_from(clock, std::nullopt).time_of_day == 37800.0);
}

TEST_CASE("geodetic conversion: origin maps to zero, small offsets match the local scale") {
  const Geodetic origin{52.0, 4.0, 0.0};
  const auto o = geodetic_to_enu(origin, origin);
  CHECK(std::abs(o.east) < 1e-6);
  CHECK(std::abs(o.north) < 1e-6);
  CHECK(std::abs(o.up) < 1e-6);
  // One arc-second of latitude is about 30.9 m; east follows cos(latitude).
  const auto n = geodetic_to_enu({52.0 + 1.0 / 3600.0, 4.0, 0.0}, origin);
  CHECK(n.north == doctest::Approx(30.92).epsilon(0.01));
  CHECK(std::abs(n.east) < 1e-6);
  const auto e = geodetic_to_enu({52.0, 4.0 + 1.0 / 3600.0, 0.0}, origin);
  CHECK(e.east == doctest::Approx(19.07).epsilon(0.01));
}

TEST_CASE("options: velocity bounds, ranking and infeasibility") {
  ServiceConfig cfg;
  SUBCASE("3 km over 600 s gives v_min 5 m/s in every option") {
    const auto opts = generate_options(corridor_request(), {}, {}, cfg);
    REQUIRE(!opts.empty());
    for (const auto& o : opts) {
      CHECK(o.v_min == doctest::Approx(5.0).epsilon(1e-12));
      CHECK(o.v_min <= o.v_max);
      CHECK(o.capacity >= 60.0);
      CHECK(lanes::validate_plan(o.plan, {}, o.window).valid());
      CHECK(o.window.t_start == kMissionStart);
      CHECK(o.window.t_end == kMissionStart + 600.0 + 60.0);
    }
  }
  SUBCASE("low throughput ranks the two-lane stack first") {
    const auto opts = generate_options(corridor_request(60.0), {}, {}, cfg);
    REQUIRE(opts.size() == 6);
    CHECK(opts.front().plan.distribution().kind == lanes::Distribution::Kind::BasicB);
    CHECK(opts.front().plan.layout().kind == lanes::CrossSectionLayout::Kind::VerticalStack);
    CHECK(opts.front().score == 1.0);
    for (std::size_t i = 1; i < opts.size(); ++i) CHECK(opts[i].score < opts[i - 1].score);
    // CL1 is not eligible for 3 km; CL2 is the least demanding that is.
    CHECK(opts.front().required_cl == fence::ComplianceLevel::CL2);
  }
  SUBCASE("deterministic") {
    const auto a = generate_options(corridor_request(900.0), {}, {}, cfg);
    const auto b = generate_options(corridor_request(900.0), {}, {}, cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(to_json(a[i]) == to_json(b[i]));
  }
  SUBCASE("high throughput drops the two-lane plans") {
    const auto opts = generate_options(corridor_request(2500.0), {}, {}, cfg);
    for (const auto& o : opts)
      CHECK(o.plan.distribution().kind != lanes::Distribution::Kind::BasicB);
  }
  SUBCASE("duration too short: VMinExceedsVMax") {
    try {
      generate_options(corridor_request(60.0, 100.0), {}, {}, cfg);
      FAIL("expected Infeasible");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::Infeasible);
      CHECK(e.details() == std::vector<std::string>{"VMinExceedsVMax"});
    }
  }
  SUBCASE("wind lowers v_max") {
    const auto calm = generate_options(corridor_request(), {0.0}, {}, cfg);
    const auto windy = generate_options(corridor_request(), {4.0}, {}, cfg);
    CHECK(windy.front().v_max == doctest::Approx(calm.front().v_max - 4.0));
  }
  SUBCASE("no eligible CL") {
    auto req = corridor_request();
    req.available_cls = {fence::ComplianceLevel::CL1};
    try {
      generate_options(req, {}, {}, cfg);
      FAIL("expected Infeasible");
    } catch (const Error& e) {
      CHECK(e.details() == std::vector<std::string>{"NoEligibleCL"});
    }
  }
  SUBCASE("a zone across the route blocks every plan") {
    geometry::NoFlyZone z{"wall", {{1400, -200}, {1600, -200}, {1600, 200}, {1400, 200}}, 0, 500,
                          {0, 1e6}};
    try {
      generate_options(corridor_request(), {}, {z}, cfg);
      FAIL("expected Infeasible");
    } catch (const Error& e) {
      CHECK(e.details() == std::vector<std::string>{"AllPlansConflictWithZones"});
    }
  }
}

TEST_CASE("lifecycle: allocate, run, complete, release, replay") {
  ServiceHarness h;
  const auto id = h.service->ingest_mission(corridor_request());
  CHECK(h.service->status(id) == MissionStatus::Draft);
  CHECK(code_of([&] { h.service->handle_command(id, {OperatorCommand::Kind::AbortMission}); }) ==
        Errc::IncompatibleStatus);
  const auto opts = h.service->generate_options(id, {}, {});
  CHECK(h.service->status(id) == MissionStatus::OptionsReady);
  CHECK(code_of([&] { h.service->activate_and_run(id); }) == Errc::NotAllocated);
  const auto alloc = h.service->select_and_negotiate(id, opts.front().id);
  CHECK(alloc.negotiation_round == 1);
  CHECK(h.service->status(id) == MissionStatus::Allocated);

  CHECK(code_of([&] { h.service->activate_and_run(id); }) == Errc::OutsideWindow);
  h.now = kMissionStart + 1.0;
  h.service->activate_and_run(id);
  CHECK(h.service->status(id) == MissionStatus::Active);
  CHECK(h.server.allocations().front().state == utm::AllocationState::Active);

  step_until_airborne(*h.service, id);
  CHECK(code_of([&] { h.service->complete_and_release(id); }) == Errc::UAVsStillActive);

  run_to_completion(*h.service, id);
  const auto final_record = h.service->complete_and_release(id);
  CHECK(final_record.at("status") == "Released");
  CHECK(final_record.at("sealed") == true);
  CHECK(h.server.allocations().empty());
  const auto& m = final_record.at("report");
  CHECK(m.at("breaches").at("CoreOverlap") == 0);
  CHECK(m.at("spawned").get<int>() == 10);
  CHECK(m.at("completed").get<int>() == 10);

  std::vector<std::string> lines;
  for (const auto& e : h.service->entries(id, 0, 1u << 30)) lines.push_back(to_json(e).dump());
  CHECK(replay_journal(lines) == final_record);

  // The released volume can be proposed again.
  const auto again = h.service->ingest_mission(corridor_request());
  const auto opts2 = h.service->generate_options(again, {}, {});
  CHECK(h.service->select_and_negotiate(again, opts2.front().id).negotiation_round == 1);
}

TEST_CASE("negotiation outcomes") {
  SUBCASE("an altitude conflict re-plans the lanes at the new altitude") {
    utm::UtmServer server;
    utm::InProcessTransport t(server);
    utm::UtmClient seed(t, "seed");
    const utm::AirspaceVolume block{
        geometry::CorridorTube(geometry::build_route({{0, 0, 100}, {3000, 0, 100}}), 20.0),
        {0, 86400}};
    const auto q = std::get<utm::CostQuote>(seed.send(utm::Propose{block}));
    REQUIRE(std::holds_alternative<utm::Ack>(seed.send(utm::Approve{q.allocation_id})));

    ServiceHarness h({}, &server);
    const auto id = h.allocated();
    const auto rec = h.service->record(id);
    CHECK(rec.at("allocation").at("negotiation_round") == 2);
    CHECK(rec.at("replanned") == true);
    CHECK(rec.at("negotiation").size() == 2);
    const auto plan = io::lane_plan_from(io::plain(rec.at("plan")), "plan");
    for (const auto& p : plan.corridor().centerline().waypoints()) CHECK(p.up == 150.0);
    CHECK(lanes::validate_plan(plan, {}, {kMissionStart, kMissionStart + 660}).valid());
  }
  SUBCASE("a saturated registry exhausts the rounds") {
    utm::UtmServer server;
    utm::InProcessTransport t(server);
    utm::UtmClient seed(t, "seed");
    const utm::AirspaceVolume block{
        geometry::CorridorTube(geometry::build_route({{0, 0, 100}, {3000, 0, 100}}), 5000.0),
        {-1e6, 1e6}};
    const auto q = std::get<utm::CostQuote>(seed.send(utm::Propose{block}));
    REQUIRE(std::holds_alternative<utm::Ack>(seed.send(utm::Approve{q.allocation_id})));

    ServiceHarness h({}, &server);
    const auto id = h.service->ingest_mission(corridor_request());
    const auto opts = h.service->generate_options(id, {}, {});
    CHECK(code_of([&] { h.service->select_and_negotiate(id, opts.front().id); }) ==
          Errc::NegotiationFailed);
    const auto rec = h.service->record(id);
    CHECK(rec.at("status") == "OptionsReady");
    CHECK(rec.at("negotiation").size() == 5);
    CHECK(server.allocations().size() == 1);
  }
}

TEST_CASE("operator commands") {
  ServiceHarness h;
  const auto id = h.active();
  step_until_airborne(*h.service, id);
  const auto uavs = h.service->uavs(id);
  REQUIRE(!uavs.empty());
  const auto target = uavs.front().id;

  CHECK(code_of([&] {
          h.service->handle_command(id, {OperatorCommand::Kind::CommandLanding, "", "U9999"});
        }) == Errc::UnknownUAV);
  h.service->handle_command(id, {OperatorCommand::Kind::CommandLanding, "", target});
  h.service->step(id, 1);
  for (const auto& u : h.service->uavs(id)) {
    if (u.id == target) CHECK(u.mode == sim::Mode::Landing);
  }

  CHECK(code_of([&] {
          h.service->handle_command(id, {OperatorCommand::Kind::AcknowledgeWarning, "", "", "E1"});
        }) == Errc::UnknownEvent);

  h.service->handle_command(id, {OperatorCommand::Kind::AbortMission});
  const auto rec = h.service->record(id);
  CHECK(rec.at("status") == "Released");
  const std::vector<std::string> expected{"Draft",  "OptionsReady", "Negotiating", "Allocated",
                                          "Active", "Aborted",      "Released"};
  CHECK(rec.at("status_history").get<std::vector<std::string>>() == expected);
  CHECK(h.server.allocations().empty());
  CHECK(rec.at("report").at("landed").get<int>() >= 1);
}

TEST_CASE("breach events reach the journal within one step and are acknowledged once") {
  ServiceHarness h;
  const auto id = h.allocated();
  h.now = kMissionStart + 5.0;
  sim::SimConfig cfg;
  cfg.duration = 600;
  cfg.scheduled.push_back({0.0, "L2", {fence::ComplianceLevel::CL3, 6.0}});
  cfg.record_telemetry = false;
  h.service->activate_and_run(id, cfg);
  h.service->step(id, 20);
  const auto seq = h.service->entries(id, 0, 1u << 30).back().seq;

  sim::Injection push;
  push.kind = sim::Injection::Kind::Disturbance;
  push.uav_id = "U0001";
  push.lateral = 4.0;  // lane radius 3 m: outside the lane, inside the corridor
  h.service->inject(id, push);
  h.service->step(id, 1);
  std::string warning;
  for (const auto& e : h.service->entries(id, seq)) {
    if (e.type == "SimEvent" && e.data.at("event").at("type") == "Breach") {
      CHECK(e.data.at("event").at("detail") == "LaneBreach");
      warning = e.data.at("event_id").get<std::string>();
    }
  }
  REQUIRE(!warning.empty());
  const OperatorCommand ack{OperatorCommand::Kind::AcknowledgeWarning, "", "", warning};
  h.service->handle_command(id, ack);
  CHECK(h.service->record(id).at("warnings").at(warning).at("acknowledged") == true);
  CHECK(code_of([&] { h.service->handle_command(id, ack); }) == Errc::IncompatibleStatus);
}

TEST_CASE("journal fold rejects paths outside the lifecycle graph") {
  ordered_json rec;
  apply_entry(rec, {1, "Created", std::nullopt, {{"id", "M0001"}, {"request", nullptr}}});
  CHECK(code_of([&] { apply_entry(rec, {2, "Activated", std::nullopt,
                                        {{"config", nullptr}, {"activated_at", 0}}}); }) ==
        Errc::IncompatibleStatus);
  CHECK(code_of([&] { apply_entry(rec, {2, "Released", std::nullopt, {{"report", nullptr}}}); }) ==
        Errc::IncompatibleStatus);
}

TEST_CASE("crash recovery resumes from the journal and the last snapshot") {
  ServiceConfig cfg;
  cfg.snapshot_every = 200;
  auto scenario = [&](Service& s, double& now) {
    const auto id = s.ingest_mission(corridor_request(120.0));
    const auto opts = s.generate_options(id, {}, {});
    s.select_and_negotiate(id, opts.front().id);
    now = kMissionStart + 5.0;
    s.activate_and_run(id);
    step_until_airborne(s, id);
    s.step(id, 230);
    const auto uavs = s.uavs(id);
    REQUIRE(!uavs.empty());
    s.handle_command(id, {OperatorCommand::Kind::CommandLanding, "", uavs.back().id});
    s.step(id, 37);
    return id;
  };

  ServiceHarness reference(cfg);
  const auto ref_id = scenario(*reference.service, reference.now);
  reference.service->step(ref_id, 400);

  for (const bool drop_snapshot : {false, true}) {
    CAPTURE(drop_snapshot);
    const auto dir = fixtures::temp_dir("recovery");
    cfg.data_dir = dir.string();
    ServiceHarness h(cfg);
    const auto id = scenario(*h.service, h.now);
    const auto before = h.service->record(id);
    h.service.reset();  // crash: nothing beyond the journal and snapshot survives

    if (drop_snapshot) std::filesystem::remove(dir / (id + ".snapshot.json"));
    // A torn trailing line from an interrupted write is discarded.
    { std::ofstream(dir / (id + ".journal.jsonl"), std::ios::app) << "{\"seq\": 99"; }

    h.service = std::make_unique<Service>(cfg, h.transport, [&h] { return h.now; });
    CHECK(h.service->record(id) == before);
    CHECK(h.service->status(id) == MissionStatus::Active);
    h.service->step(id, 400);
    CHECK(h.service->record(id) == reference.service->record(ref_id));
    const auto a = h.service->entries(id, 0, 1u << 30);
    const auto b = reference.service->entries(ref_id, 0, 1u << 30);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(to_json(a[i]) == to_json(b[i]));
    const auto m = h.service->metrics(id);
    REQUIRE(m);
    CHECK(overlaps(*m) == 0);
    CHECK(replay_journal(journal_lines(dir / (id + ".journal.jsonl"))) == h.service->record(id));
    h.service.reset();
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("stream is ordered and resumable by sequence number") {
  ServiceHarness h;
  const auto id = h.active();
  h.service->step(id, 100);
  const auto all = h.service->entries(id, 0, 1u << 30);
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i].seq == i + 1);
  const auto tail = h.service->entries(id, 10, 5);
  REQUIRE(tail.size() == 5);
  CHECK(tail.front().seq == 11);
  CHECK_FALSE(h.service->wait_for_entries(id, all.back().seq, 10));
  CHECK(h.service->wait_for_entries(id, all.back().seq - 1, 10));
}
