#include <map>
#include <random>

#include "../common/fixtures.hpp"
#include "corridrone/error.hpp"
#include "corridrone/geofence.hpp"
#include "corridrone/lane_planner.hpp"
#include "doctest.h"

using namespace corridrone;
using namespace corridrone::lanes;
using fence::ComplianceLevel;

namespace {

std::map<std::string, FlowDirection> directions(const LanePlan& plan) {
  std::map<std::string, FlowDirection> out;
  for (const auto& l : plan.lanes()) out[l.id] = l.direction;
  return out;
}

// Along-track extent of a placed fence: [rear, front].
std::pair<double, double> extent(double progress, const fence::CoreGeofence& f) {
  return {progress - f.uav_length() / 2 - f.d_r(), progress + f.uav_length() / 2 + f.d_f()};
}

}  // namespace

TEST_CASE("distributions give the fixed direction maps on both layouts") {
  using enum FlowDirection;
  const std::map<std::string, FlowDirection> a{{"L1", Inflow}, {"L2", Outflow}, {"L3", Outflow}, {"L4", Inflow}};
  const std::map<std::string, FlowDirection> b{{"L1", Inflow}, {"L2", Outflow}, {"L3", Inflow}, {"L4", Outflow}};
  const std::map<std::string, FlowDirection> basic{{"L2", Outflow}, {"L3", Inflow}};
  for (bool grid : {false, true}) {
    auto plan = [&](Distribution d) { return grid ? fixtures::grid_plan(d) : fixtures::stack_plan(d); };
    CHECK(directions(plan(Distribution::a())) == a);
    CHECK(directions(plan(Distribution::b())) == b);
    CHECK(directions(plan(Distribution::basic_b())) == basic);
  }
}

TEST_CASE("layout slots") {
  const auto stack = CrossSectionLayout::vertical_stack(8.0).slots();
  REQUIRE(stack.size() == 4);
  CHECK(stack[0].second.vertical == 12.0);
  CHECK(stack[3].second.vertical == -12.0);
  const auto grid = CrossSectionLayout::grid_2x2(10.0, 8.0).slots();
  CHECK(grid[0].second == geometry::CrossSectionOffset{5.0, 4.0});
  CHECK(grid[3].second == geometry::CrossSectionOffset{-5.0, -4.0});
}

TEST_CASE("distribution and layout must agree") {
  const geometry::CorridorTube tube(fixtures::straight_route(), 20.0);
  try {
    plan_lanes(tube, CrossSectionLayout::vertical_stack(8.0, 3), Distribution::a(), 3.0);
    FAIL("expected DistributionLaneMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DistributionLaneMismatch);
  }
  const auto custom = Distribution::make_custom({{"L1", FlowDirection::Inflow}});
  CHECK_THROWS_AS(plan_lanes(tube, CrossSectionLayout::custom({{0, 0}, {0, 8}}), custom, 3.0), Error);
  try {
    plan_lanes(tube, CrossSectionLayout::vertical_stack(8.0), Distribution::a(), 3.0);
    plan_lanes(geometry::CorridorTube(fixtures::straight_route(), 10.0),
               CrossSectionLayout::vertical_stack(8.0), Distribution::a(), 3.0);
    FAIL("expected LayoutTooLargeForCorridor");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::LayoutTooLargeForCorridor);
  }
}

TEST_CASE("downwash coupling counts") {
  // Stack: same-direction neighbours with no lane between them couple.
  CHECK(coupled_count(fixtures::stack_plan(Distribution::a())) == 1);  // L2/L3
  CHECK(coupled_count(fixtures::stack_plan(Distribution::b())) == 0);
  CHECK(coupled_count(fixtures::stack_plan(Distribution::basic_b())) == 0);
  // Grid: columns {L1, L3} and {L2, L4}.
  CHECK(coupled_count(fixtures::grid_plan(Distribution::a())) == 0);
  CHECK(coupled_count(fixtures::grid_plan(Distribution::b())) == 2);
}

TEST_CASE("plan validation") {
  const auto plan = fixtures::stack_plan(Distribution::b());
  CHECK(validate_plan(plan, {}, {0, 100}).valid());

  geometry::NoFlyZone z{"Z", {{1000, -30}, {1100, -30}, {1100, 30}, {1000, 30}}, 0, 90, {0, 50}};
  auto report = validate_plan(plan, {z}, {0, 100});
  REQUIRE_FALSE(report.valid());
  // Only the lowest lane (centre 88 m, radius 3) dips below 90 m.
  CHECK(report.violations.size() == 1);
  CHECK(report.violations[0].kind == Violation::Kind::NoFlyConflict);
  CHECK(report.violations[0].lane == "L4");
  CHECK(report.violations[0].other == "Z");
  CHECK(validate_plan(plan, {z}, {60, 100}).valid());

  const geometry::CorridorTube tube(fixtures::straight_route(), 20.0);
  const auto tight = plan_lanes(tube, CrossSectionLayout::vertical_stack(5.0), Distribution::b(), 3.0);
  report = validate_plan(tight, {}, {0, 100});
  CHECK_FALSE(report.valid());
  CHECK(report.violations[0].kind == Violation::Kind::LaneOverlap);
}

TEST_CASE("lane change paths") {
  const auto plan = fixtures::grid_plan(Distribution::b());
  KinematicLimits lim;
  // L1 and L3 are both inflow.
  const auto path = lane_change_path(plan, plan.lane("L1"), plan.lane("L3"), 1000.0, 10.0, lim);
  REQUIRE(path.size() > 2);
  CHECK(path.front().vertical == doctest::Approx(4.0));
  CHECK(path.back().vertical == doctest::Approx(-4.0));
  CHECK(path.back().lateral == doctest::Approx(5.0));
  // Cross-track rate never exceeds max_cross_speed at 10 m/s along track.
  for (std::size_t i = 1; i < path.size(); ++i) {
    const double ds = std::abs(path[i].s - path[i - 1].s);
    const double dc = std::hypot(path[i].lateral - path[i - 1].lateral, path[i].vertical - path[i - 1].vertical);
    CHECK(dc / (ds / 10.0) <= lim.max_cross_speed + 1e-9);
  }
  try {
    lane_change_path(plan, plan.lane("L1"), plan.lane("L2"), 1000.0, 10.0, lim);
    FAIL("expected IncompatibleDirections");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IncompatibleDirections);
  }
}

TEST_CASE("capacity is 3600 v / headway") {
  const auto plan = fixtures::stack_plan(Distribution::b());
  CHECK(throughput_capacity(plan.lane("L1"), 10.0, 40.0) == doctest::Approx(900.0));
}

TEST_CASE("fence dimensions grow with speed and shrink with compliance level") {
  const fence::FenceConfig cfg;
  for (auto cl : {ComplianceLevel::CL1, ComplianceLevel::CL2, ComplianceLevel::CL3}) {
    for (int v = 0; v < 15; ++v) {
      const auto a = fence::core_fence_dims(v, cl, 0.5, 1.0, cfg);
      const auto b = fence::core_fence_dims(v + 1, cl, 0.5, 1.0, cfg);
      CHECK(b.d_f() > a.d_f());
      CHECK(b.d_r() > a.d_r());
    }
  }
  for (int v = 0; v <= 15; ++v) {
    const double t1 = fence::core_fence_dims(v, ComplianceLevel::CL1, 0.5, 1.0, cfg).d_t();
    const double t2 = fence::core_fence_dims(v, ComplianceLevel::CL2, 0.5, 1.0, cfg).d_t();
    const double t3 = fence::core_fence_dims(v, ComplianceLevel::CL3, 0.5, 1.0, cfg).d_t();
    CHECK(t1 > t2);
    CHECK(t2 > t3);
  }
}

TEST_CASE("headway and overlap agree with an interval oracle") {
  const fence::FenceConfig cfg;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> speed(0.0, 15.0);
  std::uniform_int_distribution<int> level(1, 3);
  std::uniform_real_distribution<double> frac(0.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const auto cl_l = static_cast<ComplianceLevel>(level(rng));
    const auto cl_f = static_cast<ComplianceLevel>(level(rng));
    const auto lead = fence::core_fence_dims(speed(rng), cl_l, 0.5, 1.0, cfg);
    const auto follow = fence::core_fence_dims(speed(rng), cl_f, 0.5, 1.0, cfg);
    const double h = fence::min_headway(lead, follow);
    const double spacing = i % 10 == 0 ? h : frac(rng) * h;
    const auto [lead_rear, lead_front] = extent(spacing, lead);
    const auto [fol_rear, fol_front] = extent(0.0, follow);
    // Boxes touching face to face (within rounding) do not overlap.
    const bool oracle = fol_front - lead_rear > 1e-9 && lead_front - fol_rear > 1e-9;
    const bool overlap = fence::core_overlap({spacing, 0, 0, lead}, {0.0, 0, 0, follow});
    CHECK(overlap == oracle);
    CHECK((spacing >= h) == !overlap);
  }
  // Side by side in neighbouring lanes never overlaps.
  const auto f = fence::core_fence_dims(10.0, ComplianceLevel::CL2, 0.5, 1.0, cfg);
  CHECK_FALSE(fence::core_overlap({0, 0, 0, f}, {0, 10.0, 0, f}));
  CHECK(fence::core_overlap({0, 0, 0, f}, {0, 1.0, 0, f}));
}

TEST_CASE("containment breaches") {
  const auto plan = fixtures::stack_plan(Distribution::b());
  const auto& lane = plan.cylinder("L2");
  const auto& route = plan.corridor().centerline();
  auto at = [&](double lat, double vert) { return route.to_world({500.0, lat, vert}); };
  CHECK(fence::check_containment("U", at(1.0, 4.0), lane, plan.corridor(), 0).empty());
  auto ev = fence::check_containment("U", at(4.0, 4.0), lane, plan.corridor(), 0);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].kind == fence::BreachKind::LaneBreach);
  ev = fence::check_containment("U", at(21.0, 4.0), lane, plan.corridor(), 0);
  REQUIRE(ev.size() == 2);
  CHECK(ev[1].kind == fence::BreachKind::CorridorBreach);
  CHECK(ev[1].severity == fence::Severity::Safety);
}

TEST_CASE("eligibility") {
  const fence::EligibilityPolicy p;
  CHECK(fence::mission_eligibility(ComplianceLevel::CL1, 1500, 300, p).eligible);
  const auto e = fence::mission_eligibility(ComplianceLevel::CL1, 3000, 900, p);
  CHECK_FALSE(e.eligible);
  CHECK(e.reasons.size() == 2);
  CHECK(fence::mission_eligibility(ComplianceLevel::CL2, 3000, 900, p).eligible);
  CHECK(fence::mission_eligibility(ComplianceLevel::CL3, 1e6, 1e6, p).eligible);
}
