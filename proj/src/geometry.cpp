#include "corridrone/geometry.hpp"

#include <algorithm>
#include <limits>

#include "corridrone/error.hpp"

namespace corridrone::geometry {

namespace {

double horizontal_norm(Point3 v) { return std::hypot(v.east, v.north); }

bool within_pitch_limit(Point3 v) {
  const double h = horizontal_norm(v);
  return h > 0.0 && std::abs(v.up) <= kMaxPitchRatio * h;
}

Point3 left_axis(Point3 tangent) {
  const double h = horizontal_norm(tangent);
  return {-tangent.north / h, tangent.east / h, 0.0};
}

double segment_point_distance2(Point2 a, Point2 b, Point2 p) {
  const double dx = b.east - a.east;
  const double dy = b.north - a.north;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = std::clamp(((p.east - a.east) * dx + (p.north - a.north) * dy) / len2, 0.0, 1.0);
  }
  const double ex = a.east + t * dx - p.east;
  const double ey = a.north + t * dy - p.north;
  return ex * ex + ey * ey;
}

double orient(Point2 a, Point2 b, Point2 c) {
  return (b.east - a.east) * (c.north - a.north) - (b.north - a.north) * (c.east - a.east);
}

bool on_segment(Point2 a, Point2 b, Point2 p) {
  return std::min(a.east, b.east) <= p.east && p.east <= std::max(a.east, b.east) &&
         std::min(a.north, b.north) <= p.north && p.north <= std::max(a.north, b.north);
}

bool segments_intersect(Point2 a, Point2 b, Point2 c, Point2 d) {
  const double o1 = orient(a, b, c);
  const double o2 = orient(a, b, d);
  const double o3 = orient(c, d, a);
  const double o4 = orient(c, d, b);
  if (((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) && ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0))) {
    return true;
  }
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

// Closest distance between segments [p0,p1] and [q0,q1] in 3D.
double segment_segment_distance(Point3 p0, Point3 p1, Point3 q0, Point3 q1) {
  const Point3 d1 = p1 - p0;
  const Point3 d2 = q1 - q0;
  const Point3 r = p0 - q0;
  const double a = dot(d1, d1);
  const double e = dot(d2, d2);
  const double f = dot(d2, r);
  double s = 0.0;
  double t = 0.0;
  if (a <= 0.0 && e <= 0.0) return norm(r);
  if (a <= 0.0) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = dot(d1, r);
    if (e <= 0.0) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = dot(d1, d2);
      const double denom = a * e - b * b;
      s = denom > 0.0 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return distance(p0 + s * d1, q0 + t * d2);
}

}  // namespace

Route Route::build(std::vector<Point3> waypoints, double min_segment_length) {
  if (waypoints.size() < 2) {
    fail(Errc::TooFewWaypoints, "a route needs at least two waypoints");
  }
  for (const auto& p : waypoints) {
    require(is_finite(p), "waypoint coordinates must be finite");
  }
  Route r;
  r.cumulative_.push_back(0.0);
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
    const Point3 d = waypoints[i + 1] - waypoints[i];
    const double len = norm(d);
    if (len < min_segment_length) {
      fail(Errc::DegenerateSegment, "segment " + std::to_string(i) + " is degenerate", {}, i);
    }
    if (!within_pitch_limit(d)) {
      fail(Errc::PitchLimitExceeded, "segment " + std::to_string(i) + " exceeds the pitch limit",
           {}, i);
    }
    const Point3 tangent = (1.0 / len) * d;
    const Point3 lateral = left_axis(tangent);
    r.frames_.push_back({tangent, lateral, cross(tangent, lateral)});
    r.segment_lengths_.push_back(len);
    r.total_length_ += len;
    r.cumulative_.push_back(r.total_length_);
  }
  r.waypoints_ = std::move(waypoints);
  return r;
}

Route::Locator Route::locate(double s) const {
  if (!(s > 0.0)) return {0, 0.0};
  if (s >= total_length_) return {segment_count() - 1, 1.0};
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t i = static_cast<std::size_t>(std::distance(cumulative_.begin(), it)) - 1;
  i = std::min(i, segment_count() - 1);
  return {i, std::clamp((s - cumulative_[i]) / segment_lengths_[i], 0.0, 1.0)};
}

double Route::arc_at(Locator loc) const {
  return cumulative_[loc.segment] + loc.fraction * segment_lengths_[loc.segment];
}

Point3 Route::point_at(Locator loc) const {
  const Point3& a = waypoints_[loc.segment];
  const Point3& b = waypoints_[loc.segment + 1];
  return a + loc.fraction * (b - a);
}

Point3 Route::point_at(double s) const { return point_at(locate(s)); }

Point3 Route::to_world(const ArcPosition& pos) const {
  const Locator loc = locate(pos.s);
  const SegmentFrame& f = frames_[loc.segment];
  return point_at(loc) + pos.lateral * f.lateral + pos.vertical * f.normal;
}

Projection project(const Point3& p, const Route& route) {
  const auto& wps = route.waypoints();
  double best2 = std::numeric_limits<double>::infinity();
  std::size_t best_seg = 0;
  double best_t = 0.0;
  for (std::size_t i = 0; i < route.segment_count(); ++i) {
    const Point3 d = wps[i + 1] - wps[i];
    const double len2 = dot(d, d);
    const double t = std::clamp(dot(p - wps[i], d) / len2, 0.0, 1.0);
    const Point3 q = wps[i] + t * d;
    const Point3 e = p - q;
    const double dist2 = dot(e, e);
    if (dist2 < best2) {
      best2 = dist2;
      best_seg = i;
      best_t = t;
    }
  }
  Projection out;
  out.closest = route.point_at(Route::Locator{best_seg, best_t});
  const Point3 e = p - out.closest;
  const SegmentFrame& f = route.frame(best_seg);
  out.arc = {route.segment_start(best_seg) + best_t * route.segment_lengths()[best_seg],
             dot(e, f.lateral), dot(e, f.normal)};
  out.distance = norm(e);
  return out;
}

Route offset_route(const Route& route, const CrossSectionOffset& offset) {
  const auto& wps = route.waypoints();
  const std::size_t n = wps.size();
  std::vector<Point3> shifted;
  shifted.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Point3 tangent;
    if (i == 0) {
      tangent = route.frame(0).tangent;
    } else if (i == n - 1) {
      tangent = route.frame(n - 2).tangent;
    } else {
      tangent = 0.5 * (route.frame(i - 1).tangent + route.frame(i).tangent);
    }
    if (!within_pitch_limit(tangent)) {
      fail(Errc::PitchLimitExceeded,
           "vertex " + std::to_string(i) + " has no well-defined lateral axis", {}, i);
    }
    const Point3 lateral = left_axis(tangent);
    shifted.push_back(wps[i] + offset.lateral * lateral + Point3{0.0, 0.0, offset.vertical});
  }
  return Route::build(std::move(shifted));
}

CorridorTube::CorridorTube(Route centerline, double outer_radius)
    : centerline_(std::move(centerline)), outer_radius_(outer_radius) {
  require(outer_radius > 0.0 && std::isfinite(outer_radius), "outer_radius must be > 0");
}

double CorridorTube::volume() const {
  return M_PI * outer_radius_ * outer_radius_ * centerline_.total_length();
}

LaneCylinder::LaneCylinder(const Route& parent, CrossSectionOffset offset, double radius)
    : offset_(offset), radius_(radius), centerline_(offset_route(parent, offset)) {
  require(radius > 0.0 && std::isfinite(radius), "lane radius must be > 0");
}

void NoFlyZone::validate() const {
  require(footprint.size() >= 3, "no-fly zone " + id + " needs >= 3 vertices");
  require(alt_min < alt_max, "no-fly zone " + id + " needs alt_min < alt_max");
  require(active_window.t_start < active_window.t_end,
          "no-fly zone " + id + " needs t_start < t_end");
  const std::size_t n = footprint.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(footprint[i], footprint[(i + 1) % n], footprint[j],
                             footprint[(j + 1) % n])) {
        fail(Errc::PreconditionViolated, "no-fly zone " + id + " polygon is not simple");
      }
    }
  }
}

bool contains(const CorridorTube& tube, const Point3& p) {
  return project(p, tube.centerline()).distance <= tube.outer_radius();
}

bool lane_contains(const LaneCylinder& lane, const Point3& p) {
  return project(p, lane.centerline()).distance <= lane.radius();
}

bool point_in_polygon(std::span<const Point2> polygon, Point2 p) {
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2& a = polygon[i];
    const Point2& b = polygon[j];
    if ((a.north > p.north) != (b.north > p.north)) {
      const double x = a.east + (p.north - a.north) * (b.east - a.east) / (b.north - a.north);
      if (p.east < x) inside = !inside;
    }
  }
  return inside;
}

double distance_to_polygon(std::span<const Point2> polygon, Point2 p) {
  if (point_in_polygon(polygon, p)) return 0.0;
  double best2 = std::numeric_limits<double>::infinity();
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    best2 = std::min(best2, segment_point_distance2(polygon[i], polygon[(i + 1) % n], p));
  }
  return std::sqrt(best2);
}

double distance_to_zone(const NoFlyZone& zone, const Point3& p) {
  const double dh = distance_to_polygon(zone.footprint, {p.east, p.north});
  const double dv = std::max({zone.alt_min - p.up, p.up - zone.alt_max, 0.0});
  return std::hypot(dh, dv);
}

std::vector<Point3> sample_centerline(const Route& route, double resolution) {
  require(resolution > 0.0, "sampling resolution must be > 0");
  std::vector<Point3> out;
  const auto& wps = route.waypoints();
  for (std::size_t i = 0; i < route.segment_count(); ++i) {
    const double len = route.segment_lengths()[i];
    const auto steps = static_cast<std::size_t>(std::ceil(len / resolution));
    for (std::size_t k = 0; k < steps; ++k) {
      const double f = static_cast<double>(k) / static_cast<double>(steps);
      out.push_back(wps[i] + f * (wps[i + 1] - wps[i]));
    }
  }
  out.push_back(wps.back());
  return out;
}

bool intersects_nofly(const Route& centerline, double radius, const NoFlyZone& zone,
                      const TimeWindow& window, double resolution) {
  require(window.t_start < window.t_end, "query window needs t0 < t1");
  if (!window.overlaps(zone.active_window)) return false;
  for (const Point3& p : sample_centerline(centerline, resolution)) {
    if (distance_to_zone(zone, p) <= radius) return true;
  }
  return false;
}

bool intersects_nofly(const CorridorTube& tube, const NoFlyZone& zone, const TimeWindow& window,
                      double resolution) {
  return intersects_nofly(tube.centerline(), tube.outer_radius(), zone, window, resolution);
}

bool intersects_nofly(const LaneCylinder& lane, const NoFlyZone& zone, const TimeWindow& window,
                      double resolution) {
  return intersects_nofly(lane.centerline(), lane.radius(), zone, window, resolution);
}

double lane_clearance(const LaneCylinder& a, const LaneCylinder& b) {
  const auto& wa = a.centerline().waypoints();
  const auto& wb = b.centerline().waypoints();
  require(wa.size() == wb.size(), "lanes must derive from the same parent corridor");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < wa.size(); ++i) {
    const Point3 d0 = wa[i] - wb[i];
    const Point3 d1 = wa[i + 1] - wb[i + 1];
    const Point3 e = d1 - d0;
    const double ee = dot(e, e);
    const double f = ee > 0.0 ? std::clamp(-dot(d0, e) / ee, 0.0, 1.0) : 0.0;
    best = std::min({best, norm(d0 + f * e), norm(d0), norm(d1)});
  }
  return best - (a.radius() + b.radius());
}

double polyline_distance(const Route& a, const Route& b) {
  const auto& wa = a.waypoints();
  const auto& wb = b.waypoints();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < wa.size(); ++i) {
    for (std::size_t j = 0; j + 1 < wb.size(); ++j) {
      best = std::min(best, segment_segment_distance(wa[i], wa[i + 1], wb[j], wb[j + 1]));
    }
  }
  return best;
}

double map_arc(const Route& from, const Route& to, double s) {
  require(from.segment_count() == to.segment_count(),
          "arc mapping needs routes with matching waypoint counts");
  return to.arc_at(from.locate(s));
}

}  // namespace corridrone::geometry
