#include <random>

#include "../common/fixtures.hpp"
#include "../common/oracles.hpp"
#include "corridrone/error.hpp"
#include "corridrone/geometry.hpp"
#include "doctest.h"

using namespace corridrone;
using namespace corridrone::geometry;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::Io;
}

// Fraction of random points near the tube where the analytic test agrees with
// the fine sampling oracle, skipping a thin band around the surface.
void check_against_oracle(const Route& route, double radius,
                          const std::function<bool(const Point3&)>& analytic, int n,
                          std::uint64_t seed) {
  const auto& wps = route.waypoints();
  Point3 lo{INFINITY, INFINITY, INFINITY}, hi{-INFINITY, -INFINITY, -INFINITY};
  for (const auto& p : wps) {
    lo = {std::min(lo.east, p.east), std::min(lo.north, p.north), std::min(lo.up, p.up)};
    hi = {std::max(hi.east, p.east), std::max(hi.north, p.north), std::max(hi.up, p.up)};
  }
  const double pad = radius * 1.5;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(lo.east - pad, hi.east + pad);
  std::uniform_real_distribution<double> uy(lo.north - pad, hi.north + pad);
  std::uniform_real_distribution<double> uz(lo.up - pad, hi.up + pad);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int compared = 0, inside = 0;
  for (int i = 0; i < n; ++i) {
    // Half the points are drawn near the centerline so both outcomes occur.
    Point3 p;
    if (i % 2 == 0) {
      p = {ux(rng), uy(rng), uz(rng)};
    } else {
      const Point3 c = route.point_at(u01(rng) * route.total_length());
      p = c + Point3{(u01(rng) - 0.5) * 3 * radius, (u01(rng) - 0.5) * 3 * radius,
                     (u01(rng) - 0.5) * 3 * radius};
    }
    if (std::abs(project(p, route).distance - radius) < 1e-6) continue;
    const bool oracle = oracles::fine_sampled_distance(p, wps) <= radius;
    CHECK(analytic(p) == oracle);
    ++compared;
    inside += oracle;
  }
  CHECK(compared > n * 0.99);
  CHECK(inside > n / 10);
  CHECK(inside < compared - n / 10);
}

}  // namespace

TEST_CASE("route construction rejects bad polylines") {
  CHECK(code_of([] { build_route({{0, 0, 0}}); }) == Errc::TooFewWaypoints);
  try {
    build_route({{0, 0, 0}, {10, 0, 0}, {10, 0, 0}});
    FAIL("expected DegenerateSegment");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DegenerateSegment);
    CHECK(e.index() == std::optional<std::size_t>(1));
  }
  // Pitch limit: climb over horizontal run above 0.5.
  CHECK(code_of([] { build_route({{0, 0, 0}, {10, 0, 6}}); }) == Errc::PitchLimitExceeded);
  CHECK_NOTHROW(build_route({{0, 0, 0}, {10, 0, 5}}));
}

TEST_CASE("arc length and positions") {
  const auto r = fixtures::l_bend_route();
  CHECK(r.total_length() == doctest::Approx(400.0 + std::hypot(300.0, 20.0)));
  const Point3 p = r.point_at(200.0);
  CHECK(p.east == doctest::Approx(200.0));
  CHECK(p.up == doctest::Approx(80.0));
  const Point3 q = r.to_world({100.0, 2.0, -1.0});
  const auto back = project_to_route(q, r);
  CHECK(back.s == doctest::Approx(100.0));
  CHECK(back.lateral == doctest::Approx(2.0));
  CHECK(back.vertical == doctest::Approx(-1.0));
}

TEST_CASE("containment agrees with a 1 cm sampling oracle") {
  const std::vector<Route> routes = {fixtures::straight_route(), fixtures::l_bend_route(),
                                     fixtures::five_segment_route()};
  std::uint64_t seed = 11;
  for (const auto& route : routes) {
    const CorridorTube tube(route, 20.0);
    check_against_oracle(route, 20.0, [&](const Point3& p) { return contains(tube, p); }, 1000,
                         seed++);
    const LaneCylinder lane(route, {4.0, -3.0}, 3.0);
    check_against_oracle(lane.centerline(), 3.0,
                         [&](const Point3& p) { return lane_contains(lane, p); }, 1000, seed++);
  }
}

TEST_CASE("offset lanes keep their cross-section offset along every segment") {
  const auto route = fixtures::five_segment_route();
  const LaneCylinder lane(route, {4.0, -3.0}, 3.0);
  for (double s = 0; s < route.total_length(); s += 37.0) {
    const auto pos = project_to_route(route.to_world({s, 4.0, -3.0}), route);
    CHECK(pos.lateral == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(pos.vertical == doctest::Approx(-3.0).epsilon(1e-9));
  }
  CHECK(lane.centerline().waypoints().size() == route.waypoints().size());
}

TEST_CASE("lane clearance matches dense polyline distance") {
  const auto route = fixtures::l_bend_route();
  const LaneCylinder a(route, {5.0, 4.0}, 3.0);
  const LaneCylinder b(route, {-5.0, 4.0}, 3.0);
  const LaneCylinder c(route, {5.0, -4.0}, 3.0);
  for (const auto* other : {&b, &c}) {
    // Matched samples: same segment index and fraction on both lanes.
    const auto& wa = a.centerline().waypoints();
    const auto& wb = other->centerline().waypoints();
    double best = INFINITY;
    for (std::size_t i = 0; i + 1 < wa.size(); ++i) {
      for (int k = 0; k <= 20000; ++k) {
        const double f = k / 20000.0;
        best = std::min(best, distance(wa[i] + f * (wa[i + 1] - wa[i]), wb[i] + f * (wb[i + 1] - wb[i])));
      }
    }
    CHECK(lane_clearance(a, *other) == doctest::Approx(best - 6.0).epsilon(1e-6));
  }
  // On a straight route the clearance is the offset distance minus both radii.
  const auto straight = fixtures::straight_route();
  CHECK(lane_clearance(LaneCylinder(straight, {5, 4}, 3), LaneCylinder(straight, {-5, 4}, 3)) ==
        doctest::Approx(4.0));
  CHECK(lane_clearance(LaneCylinder(straight, {5, 4}, 3), LaneCylinder(straight, {5, -4}, 3)) ==
        doctest::Approx(2.0));
}

TEST_CASE("no-fly zones") {
  NoFlyZone z{"Z", {{100, -50}, {200, -50}, {200, 50}, {100, 50}}, 0, 150, {0, 1000}};
  CHECK_NOTHROW(z.validate());
  CHECK(distance_to_zone(z, {150, 0, 100}) == 0.0);
  CHECK(distance_to_zone(z, {90, 0, 100}) == doctest::Approx(10.0));
  CHECK(distance_to_zone(z, {150, 0, 160}) == doctest::Approx(10.0));
  CHECK(distance_to_zone(z, {97, 54, 154}) == doctest::Approx(std::sqrt(9.0 + 16.0 + 16.0)));

  const CorridorTube tube(fixtures::straight_route(), 20.0);
  CHECK(intersects_nofly(tube, z, {0, 100}));
  CHECK_FALSE(intersects_nofly(tube, z, {1000, 2000}));  // zone inactive then

  NoFlyZone low{"low", {{100, -50}, {200, -50}, {200, 50}, {100, 50}}, 0, 70, {0, 1000}};
  CHECK_FALSE(intersects_nofly(tube, low, {0, 100}));  // tube bottom at 80 m
  low.alt_max = 80.5;
  CHECK(intersects_nofly(tube, low, {0, 100}));

  NoFlyZone bad{"bad", {{0, 0}, {1, 1}}, 0, 10, {0, 1}};
  CHECK(code_of([&] { bad.validate(); }) == Errc::PreconditionViolated);
}

TEST_CASE("tube volume") {
  const CorridorTube tube(fixtures::straight_route(3000.0), 10.0);
  CHECK(tube.volume() == doctest::Approx(M_PI * 100.0 * 3000.0).epsilon(0.01));
}
