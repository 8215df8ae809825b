#include "doctest.h"

#include <cmath>
#include <numbers>
#include <thread>

#include "../common/oracles.hpp"
#include "corridrone/error.hpp"
#include "corridrone/utm_protocol.hpp"

using namespace corridrone;
using namespace corridrone::utm;

namespace {

AirspaceVolume volume(double north, double alt, double radius, double t0, double t1,
                      double length = 1000.0) {
  return {geometry::CorridorTube(geometry::build_route({{0, north, alt}, {length, north, alt}}),
                                 radius),
          {t0, t1}};
}

template <typename T>
T as(const Message& m) {
  REQUIRE(std::holds_alternative<T>(m));
  return std::get<T>(m);
}

}  // namespace

TEST_CASE("empty registry quote is c0 + alpha * V * T") {
  UtmServer server;
  InProcessTransport t(server);
  UtmClient c(t, "s");
  const auto v = volume(0, 100, 20, 0, 600);
  auto q = as<CostQuote>(c.send(Propose{v}));
  CHECK(q.acceptable());
  const double expected = 100.0 + 1e-6 * (std::numbers::pi * 400.0 * 1000.0) * 600.0;
  CHECK(q.cost == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("cost grows with volume and duration") {
  CostConfig cfg;
  CHECK(proposal_cost(volume(0, 100, 20, 0, 600), 0, cfg) <
        proposal_cost(volume(0, 100, 21, 0, 600), 0, cfg));
  CHECK(proposal_cost(volume(0, 100, 20, 0, 600), 0, cfg) <
        proposal_cost(volume(0, 100, 20, 0, 601), 0, cfg));
}

TEST_CASE("conflicts are space and time scoped") {
  UtmServer server;
  InProcessTransport t(server);
  UtmClient c(t, "s");
  auto q1 = as<CostQuote>(c.send(Propose{volume(0, 100, 20, 0, 600)}));
  CHECK(as<Ack>(c.send(Approve{q1.allocation_id})).state == AllocationState::Approved);
  as<Ack>(c.send(Activate{q1.allocation_id}));

  auto overlap = as<CostQuote>(c.send(Propose{volume(10, 100, 20, 300, 900)}));
  CHECK(overlap.conflicts == std::vector<std::string>{q1.allocation_id});
  auto later = as<CostQuote>(c.send(Propose{volume(10, 100, 20, 600, 900)}));
  CHECK(later.acceptable());
  // A nearby active allocation adds beta.
  CHECK(as<CostQuote>(c.send(Propose{volume(100, 100, 20, 0, 600)})).cost ==
        doctest::Approx(proposal_cost(volume(100, 100, 20, 0, 600), 1, CostConfig{})));
  CHECK(as<Reject>(c.send(Approve{overlap.allocation_id})).code == "ApproveWithoutQuote");
  CHECK(as<Reject>(c.send(Approve{"A999999"})).code == "ApproveWithoutQuote");
}

TEST_CASE("release, double release and re-propose") {
  UtmServer server;
  InProcessTransport t(server);
  UtmClient c(t, "s");
  const auto before = server.registry_json();
  const auto v = volume(0, 100, 20, 0, 600);
  auto q = as<CostQuote>(c.send(Propose{v}));
  as<Ack>(c.send(Approve{q.allocation_id}));
  as<Ack>(c.send(Activate{q.allocation_id}));
  as<Ack>(c.send(Complete{q.allocation_id}));
  CHECK(as<Ack>(c.send(Release{q.allocation_id})).state == AllocationState::Released);
  CHECK(server.registry_json() == before);
  CHECK(as<Reject>(c.send(Release{q.allocation_id})).code == "UnknownAllocation");
  CHECK(as<CostQuote>(c.send(Propose{v})).acceptable());
}

TEST_CASE("abort path releases an active allocation") {
  UtmServer server;
  InProcessTransport t(server);
  UtmClient c(t, "s");
  auto q = as<CostQuote>(c.send(Propose{volume(0, 100, 20, 0, 600)}));
  as<Ack>(c.send(Approve{q.allocation_id}));
  as<Ack>(c.send(Activate{q.allocation_id}));
  CHECK(release(c, q.allocation_id).state == AllocationState::Released);
  CHECK(server.allocations().empty());
  CHECK(as<Reject>(c.send(Complete{q.allocation_id})).code == "UnknownAllocation");
}

TEST_CASE("session sequencing") {
  UtmServer server;
  const auto v = volume(0, 100, 20, 0, 600);
  auto r1 = server.handle({"s", 1, Propose{v}});
  auto dup = server.handle({"s", 1, Propose{v}});
  CHECK(encode(r1) == encode(dup));
  CHECK(as<Reject>(server.handle({"s", 3, Propose{v}}).body).code == "OutOfOrderMessage");
  CHECK(as<Reject>(server.handle({"other", 2, Propose{v}}).body).code == "OutOfOrderMessage");
  CHECK(std::holds_alternative<CostQuote>(server.handle({"s", 2, Propose{v}}).body));
}

TEST_CASE("lost replies are retried with the same seq") {
  UtmServer server;
  InProcessTransport t(server);
  UtmClient c(t, "s");
  auto q = as<CostQuote>(c.send(Propose{volume(0, 100, 20, 0, 600)}));
  t.drop_next(2, true);
  CHECK(as<Ack>(c.send(Approve{q.allocation_id})).state == AllocationState::Approved);
  CHECK(server.allocations().size() == 1);
  t.drop_next(4);
  CHECK_THROWS_AS(c.send(Activate{q.allocation_id}), Error);
}

TEST_CASE("volumes_intersect agrees with the voxel oracle") {
  struct Case {
    double gap_north;
    double dz;
  };
  for (auto c : {Case{45.0, 0}, Case{39.0, 0}, Case{38.0, 0}, Case{0, 41}, Case{30, 30}, Case{25, 25}}) {
    const auto a = volume(0, 100, 20, 0, 10, 60);
    const auto b = volume(c.gap_north, 100 + c.dz, 20, 0, 10, 60);
    const bool oracle = oracles::voxel_tubes_intersect(a.tube.centerline().waypoints(), 20,
                                                       b.tube.centerline().waypoints(), 20, 0.5);
    CAPTURE(c.gap_north);
    CAPTURE(c.dz);
    CHECK(volumes_intersect(a, b) == oracle);
  }
  CHECK_FALSE(volumes_intersect(volume(0, 100, 20, 0, 10), volume(0, 100, 20, 10, 20)));
  CHECK(volumes_intersect(volume(0, 100, 20, 0, 10), volume(0, 100, 20, 0, 10)));
}

TEST_CASE("negotiation fixtures") {
  AdjustmentPolicy policy;
  SUBCASE("empty registry approves in round 1") {
    UtmServer server;
    InProcessTransport t(server);
    UtmClient c(t, "gcs");
    auto r = negotiate(c, volume(0, 100, 20, 0, 600), policy, 5);
    REQUIRE(r.approved());
    CHECK(r.record->negotiation_round == 1);
    CHECK(r.history.size() == 1);
  }
  SUBCASE("same-altitude conflict resolves in round 2 by altitude") {
    UtmServer server;
    InProcessTransport t(server);
    UtmClient seed(t, "seed");
    auto q = as<CostQuote>(seed.send(Propose{volume(0, 100, 20, 0, 7200)}));
    as<Ack>(seed.send(Approve{q.allocation_id}));
    UtmClient c(t, "gcs");
    auto r = negotiate(c, volume(0, 100, 20, 0, 600), policy, 5);
    REQUIRE(r.approved());
    CHECK(r.record->negotiation_round == 2);
    CHECK(r.history[0].adjustment.rfind("altitude", 0) == 0);
    CHECK(r.record->volume.tube.centerline().waypoints()[0].up == doctest::Approx(150.0));
  }
  SUBCASE("saturated registry fails at max_rounds") {
    UtmServer server;
    InProcessTransport t(server);
    UtmClient seed(t, "seed");
    auto q = as<CostQuote>(seed.send(Propose{volume(0, 100, 5000, -1e6, 1e6, 2000)}));
    as<Ack>(seed.send(Approve{q.allocation_id}));
    UtmClient c(t, "gcs");
    auto r = negotiate(c, volume(0, 100, 20, 0, 600), policy, 4);
    CHECK_FALSE(r.approved());
    CHECK(r.history.size() == 4);
    CHECK(r.history.back().round == 4);
  }
}

TEST_CASE("concurrent approvals of conflicting quotes: exactly one wins") {
  for (int trial = 0; trial < 20; ++trial) {
    UtmServer server;
    InProcessTransport t1(server), t2(server);
    UtmClient a(t1, "a"), b(t2, "b");
    auto qa = as<CostQuote>(a.send(Propose{volume(0, 100, 20, 0, 600)}));
    auto qb = as<CostQuote>(b.send(Propose{volume(5, 100, 20, 0, 600)}));
    REQUIRE(qa.acceptable());
    REQUIRE(qb.acceptable());
    Message ra, rb;
    std::thread ta([&] { ra = a.send(Approve{qa.allocation_id}); });
    std::thread tb([&] { rb = b.send(Approve{qb.allocation_id}); });
    ta.join();
    tb.join();
    CHECK(std::holds_alternative<Ack>(ra) + std::holds_alternative<Ack>(rb) == 1);
    CHECK(server.allocations().size() == 1);
  }
}

TEST_CASE("tcp transport round trip and registry persistence") {
  UtmServer server;
  TcpServer tcp(server, 0);
  TcpTransport transport("127.0.0.1", tcp.port());
  UtmClient c(transport, "gcs");
  auto r = negotiate(c, volume(0, 100, 20, 0, 600), AdjustmentPolicy{}, 3);
  REQUIRE(r.approved());
  const std::string path = "utm_registry_test.json";
  server.save(path);
  UtmServer reloaded;
  reloaded.load(path);
  CHECK(reloaded.registry_json() == server.registry_json());
  // Ids continue after the highest persisted one.
  InProcessTransport t(reloaded);
  UtmClient c2(t, "x");
  CHECK(as<CostQuote>(c2.send(Propose{volume(500, 100, 20, 0, 600)})).allocation_id == "A000002");
  tcp.stop();
  std::remove(path.c_str());
}

TEST_CASE("wire codec round trips every message type") {
  const auto v = volume(0, 100, 20, 0, 600);
  std::vector<Message> msgs{InfoRequest{v},
                            InfoResponse{{}, {{"A1", v}}},
                            Propose{v, true, 3},
                            CostQuote{"A1", 12.5, {"A2"}},
                            Approve{"A1"},
                            Activate{"A1"},
                            Complete{"A1"},
                            Release{"A1"},
                            Ack{"A1", AllocationState::Active},
                            Reject{"UnknownAllocation", {"x"}}};
  for (const auto& m : msgs) {
    Envelope e{"s", 7, m};
    CHECK(encode(decode(encode(e))) == encode(e));
  }
  CHECK_THROWS_AS(decode("{\"session\":1}"), Error);
}
