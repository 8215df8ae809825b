#pragma once

// Shared scenarios for unit and acceptance tests.

#include <cmath>
#include <vector>

#include "corridrone/geofence.hpp"
#include "corridrone/lane_planner.hpp"
#include "corridrone/traffic_sim.hpp"

namespace fixtures {

using namespace corridrone;

inline geometry::Route straight_route(double length = 3000.0, double alt = 100.0) {
  return geometry::build_route({{0, 0, alt}, {length, 0, alt}});
}

inline geometry::Route l_bend_route() {
  return geometry::build_route({{0, 0, 80}, {400, 0, 80}, {400, 300, 100}});
}

inline geometry::Route five_segment_route() {
  return geometry::build_route(
      {{0, 0, 60}, {200, 50, 70}, {350, 250, 70}, {300, 450, 90}, {500, 600, 80}, {700, 560, 80}});
}

// 4-lane stack: spacing 8 m, lane radius 3 m, corridor radius 20 m.
inline lanes::LanePlan stack_plan(const lanes::Distribution& dist,
                                  const geometry::Route& route = straight_route()) {
  return lanes::plan_lanes(geometry::CorridorTube(route, 20.0),
                           lanes::CrossSectionLayout::vertical_stack(8.0), dist, 3.0);
}

inline lanes::LanePlan grid_plan(const lanes::Distribution& dist,
                                 const geometry::Route& route = straight_route()) {
  return lanes::plan_lanes(geometry::CorridorTube(route, 20.0),
                           lanes::CrossSectionLayout::grid_2x2(10.0, 8.0), dist, 3.0);
}

// Twenty UAVs across four lanes, mixed CLs and speeds, staggered entry times.
inline sim::SimConfig twenty_uav_config(std::uint64_t seed = 7) {
  sim::SimConfig cfg;
  cfg.dt = 0.1;
  cfg.seed = seed;
  cfg.duration = 600.0;
  const char* lanes_ids[] = {"L1", "L2", "L3", "L4"};
  // CL1 is not eligible for a 3 km lane, so the mix is CL2/CL3.
  for (int i = 0; i < 20; ++i) {
    sim::Mission m;
    m.cl = (i / 4) % 2 == 0 ? fence::ComplianceLevel::CL2 : fence::ComplianceLevel::CL3;
    m.v_target = 5.0 + ((i * 3) % 5) * 1.5;
    cfg.scheduled.push_back({2.0 * (i / 4), lanes_ids[i % 4], m});
  }
  return cfg;
}

}  // namespace fixtures
