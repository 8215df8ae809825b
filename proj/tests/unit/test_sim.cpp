#include "doctest.h"

#include <algorithm>
#include <map>

#include "../common/fixtures.hpp"
#include "../common/sim_oracles.hpp"
#include "corridrone/error.hpp"

using namespace corridrone;
using namespace corridrone::sim;

namespace {

int count(const std::vector<SimEvent>& events, EventType type, const std::string& detail = "") {
  return static_cast<int>(std::count_if(events.begin(), events.end(), [&](const SimEvent& e) {
    return e.type == type && (detail.empty() || e.detail.rfind(detail, 0) == 0);
  }));
}

Mission mission(fence::ComplianceLevel cl, double v) {
  Mission m;
  m.cl = cl;
  m.v_target = v;
  return m;
}

}  // namespace

TEST_CASE("single UAV advances v*dt per step with no events") {
  SimConfig cfg;
  cfg.duration = 10;
  World w(fixtures::stack_plan(lanes::Distribution::b()), cfg);
  auto out = w.spawn("L2", mission(fence::ComplianceLevel::CL3, 5.0));
  REQUIRE(out.status == SpawnOutcome::Status::Spawned);
  const auto events_before = w.events().size();
  for (int i = 0; i < 20; ++i) w.step();
  CHECK(w.uavs().at(0).progress == doctest::Approx(20 * 0.1 * 5.0));
  CHECK(w.events().size() == events_before);
}

TEST_CASE("empty schedule gives empty report") {
  SimConfig cfg;
  cfg.duration = 5;
  auto r = run_scenario(fixtures::stack_plan(lanes::Distribution::b()), cfg);
  CHECK(r.event_log.empty());
  CHECK(r.telemetry.empty());
}

TEST_CASE("twenty UAV scenario stays safe against the brute-force oracle") {
  auto cfg = fixtures::twenty_uav_config();
  World w(fixtures::stack_plan(lanes::Distribution::b()), cfg);
  int oracle = 0;
  int lane_outside = 0;
  const auto total = static_cast<int>(cfg.duration / cfg.dt);
  for (int i = 0; i < total; ++i) {
    w.step();
    oracle += oracles::brute_force_overlaps(w);
    for (const auto& u : w.uavs()) {
      if (!geometry::lane_contains(w.plan().cylinder(u.lane_id), w.world_position(u)))
        ++lane_outside;
    }
  }
  auto m = w.metrics();
  CHECK(oracle == 0);
  CHECK(lane_outside == 0);
  CHECK(m.breach_counts[fence::BreachKind::CoreOverlap] == 0);
  CHECK(m.breach_counts[fence::BreachKind::LaneBreach] == 0);
  CHECK(m.spawned == 20);
  CHECK(m.min_headway_margin >= 0.0);
}

TEST_CASE("follower spawned too close is deferred then kept at headway") {
  SimConfig cfg;
  World w(fixtures::stack_plan(lanes::Distribution::b()), cfg);
  REQUIRE(w.spawn("L2", mission(fence::ComplianceLevel::CL3, 3.0)).status ==
          SpawnOutcome::Status::Spawned);
  auto second = w.spawn("L2", mission(fence::ComplianceLevel::CL3, 12.0));
  CHECK(second.status == SpawnOutcome::Status::Deferred);
  for (int i = 0; i < 2000; ++i) {
    w.step();
    CHECK(oracles::brute_force_overlaps(w) == 0);
  }
  CHECK(w.metrics().breach_counts[fence::BreachKind::CoreOverlap] == 0);
  CHECK(w.find(second.uav_id) != nullptr);
}

TEST_CASE("fault responses follow the compliance level") {
  SimConfig cfg;
  World w(fixtures::stack_plan(lanes::Distribution::b(), fixtures::straight_route(1500)), cfg);
  const auto a = w.spawn("L1", mission(fence::ComplianceLevel::CL1, 8.0)).uav_id;
  const auto b = w.spawn("L2", mission(fence::ComplianceLevel::CL2, 8.0)).uav_id;
  const auto c = w.spawn("L3", mission(fence::ComplianceLevel::CL3, 8.0)).uav_id;
  for (int i = 0; i < 10; ++i) w.step();
  w.inject_fault(a);
  w.inject_fault(b);
  w.inject_fault(c);
  CHECK_THROWS_AS(w.inject_fault("nope"), Error);
  w.step();
  const auto& ev = w.events();
  auto mode_of = [&](const std::string& id) {
    for (auto it = ev.rbegin(); it != ev.rend(); ++it) {
      if (it->uav_id == id && it->type == EventType::ModeChange) return it->detail;
    }
    return std::string();
  };
  CHECK(mode_of(a) == "Aborted");
  CHECK(mode_of(b) == "Landing");
  CHECK(mode_of(c) == "Degraded");
  CHECK(w.find(a)->mode == Mode::Aborted);
  CHECK(w.find(b)->mode == Mode::Landing);
  CHECK(w.find(c)->mode == Mode::Cruise);
  CHECK(w.find(c)->v_cap == doctest::Approx(0.5 * 15.0));
  CHECK(count(ev, EventType::OperatorAlert) == 1);
}

TEST_CASE("disturbances are reported within one step") {
  SimConfig cfg;
  auto plan = fixtures::stack_plan(lanes::Distribution::b());
  World w(plan, cfg);
  const auto id = w.spawn("L2", mission(fence::ComplianceLevel::CL3, 5.0)).uav_id;
  w.step();
  w.inject_disturbance(id, 0.0);
  w.step();
  CHECK(count(w.events(), EventType::Breach) == 0);
  w.inject_disturbance(id, 3.0 + 1.0);
  w.step();
  CHECK(count(w.events(), EventType::Breach, "LaneBreach") == 1);
  CHECK(count(w.events(), EventType::Breach, "CorridorBreach") == 0);
}

TEST_CASE("lane change between same-direction lanes") {
  SimConfig cfg;
  World w(fixtures::grid_plan(lanes::Distribution::b()), cfg);
  // Distribution B on a grid: L1 and L3 are both Inflow.
  const auto id = w.spawn("L1", mission(fence::ComplianceLevel::CL3, 5.0)).uav_id;
  for (int i = 0; i < 20; ++i) w.step();
  w.request_lane_change(id, "L3");
  for (int i = 0; i < 200; ++i) w.step();
  CHECK(w.find(id)->lane_id == "L3");
  CHECK(count(w.events(), EventType::LaneChangeEnd) == 1);
  CHECK(count(w.events(), EventType::Breach) == 0);
  CHECK_THROWS_AS(w.request_lane_change(id, "L2"), Error);
}

TEST_CASE("ineligible mission is rejected with reasons") {
  SimConfig cfg;
  World w(fixtures::stack_plan(lanes::Distribution::b()), cfg);
  auto out = w.spawn("L2", mission(fence::ComplianceLevel::CL1, 2.0));
  CHECK(out.status == SpawnOutcome::Status::Rejected);
  CHECK(out.reasons == std::vector<std::string>{"ExceedsLength", "ExceedsDuration"});
}

TEST_CASE("snapshot and restore continue identically") {
  auto cfg = fixtures::twenty_uav_config();
  cfg.duration = 60;
  cfg.streams.push_back({"L2", 300.0, mission(fence::ComplianceLevel::CL3, 6.0)});
  auto plan = fixtures::stack_plan(lanes::Distribution::b());
  World a(plan, cfg);
  for (int i = 0; i < 300; ++i) a.step();
  World b(plan, cfg);
  b.restore(a.snapshot());
  for (int i = 0; i < 300; ++i) {
    a.step();
    b.step();
  }
  CHECK(a.snapshot() == b.snapshot());
}

TEST_CASE("event log is ordered by time then uav") {
  auto cfg = fixtures::twenty_uav_config();
  auto r = run_scenario(fixtures::stack_plan(lanes::Distribution::b()), cfg);
  for (std::size_t i = 1; i < r.event_log.size(); ++i) {
    const auto& p = r.event_log[i - 1];
    const auto& e = r.event_log[i];
    CHECK((p.t < e.t || (p.t == e.t && p.uav_id <= e.uav_id)));
  }
}

TEST_CASE("poisson demand below capacity is carried") {
  auto plan = fixtures::stack_plan(lanes::Distribution::b(), fixtures::straight_route(1000));
  SimConfig cfg;
  cfg.duration = 7200;
  cfg.metrics_warmup = 600;
  cfg.record_telemetry = false;
  const auto m = mission(fence::ComplianceLevel::CL3, 5.0);
  const auto f = fence::core_fence_dims(5.0, m.cl, m.uav_length, m.uav_span, cfg.fence);
  const double capacity = lanes::throughput_capacity(plan.lane("L2"), 5.0, fence::min_headway(f, f));
  cfg.streams.push_back({"L2", 0.8 * capacity, m});
  auto r = run_scenario(plan, cfg);
  double achieved = 0;
  for (const auto& l : r.metrics.lanes) if (l.lane == "L2") achieved = l.throughput_per_hour;
  MESSAGE("capacity " << capacity << " achieved " << achieved);
  CHECK(achieved == doctest::Approx(0.8 * capacity).epsilon(0.1));
}

TEST_CASE("coupled lanes keep the stagger offset") {
  using lanes::FlowDirection;
  auto dist = lanes::Distribution::make_custom({{"L1", FlowDirection::Outflow},
                                                {"L2", FlowDirection::Outflow},
                                                {"L3", FlowDirection::Inflow},
                                                {"L4", FlowDirection::Inflow}});
  auto plan = fixtures::stack_plan(dist, fixtures::straight_route(1500));
  SimConfig cfg;
  cfg.duration = 900;
  cfg.streams.push_back({"L1", 300.0, mission(fence::ComplianceLevel::CL3, 6.0)});
  cfg.streams.push_back({"L2", 300.0, mission(fence::ComplianceLevel::CL2, 8.0)});
  cfg.streams.push_back({"L3", 200.0, mission(fence::ComplianceLevel::CL3, 5.0)});
  World w(plan, cfg);
  REQUIRE(w.coupled_pairs().size() == 2);
  double min_offset = 1e9;
  for (int i = 0; i < 9000; ++i) {
    w.step();
    for (const auto& a : w.uavs()) {
      for (const auto& b : w.uavs()) {
        if (a.lane_id == "L1" && b.lane_id == "L2" && a.mode != Mode::Done && b.mode != Mode::Done)
          min_offset = std::min(min_offset, std::abs(w.corridor_progress(a) - w.corridor_progress(b)));
      }
    }
  }
  MESSAGE("stagger_min " << w.stagger_min() << " observed " << min_offset);
  CHECK(min_offset >= w.stagger_min());
  CHECK(w.metrics().stagger_interventions > 0);
  CHECK(w.metrics().breach_counts[fence::BreachKind::CoreOverlap] == 0);
}
