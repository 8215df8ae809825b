#pragma once

// Corridor geometry in a local East-North-Up frame (meters).
//
// Conventions used throughout the library:
//  * lateral offsets are positive to the LEFT of the route's direction of
//    travel, vertical offsets positive up;
//  * containment is closed: a point exactly on a fence is inside;
//  * every route segment obeys the pitch limit |dz| <= 0.5 * |dxy| so the
//    horizontal lateral axis is always defined.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace corridrone::geometry {

struct Point3 {
  double east = 0.0;
  double north = 0.0;
  double up = 0.0;

  friend Point3 operator+(Point3 a, Point3 b) { return {a.east + b.east, a.north + b.north, a.up + b.up}; }
  friend Point3 operator-(Point3 a, Point3 b) { return {a.east - b.east, a.north - b.north, a.up - b.up}; }
  friend Point3 operator*(double k, Point3 a) { return {k * a.east, k * a.north, k * a.up}; }
  friend Point3 operator*(Point3 a, double k) { return k * a; }
  friend bool operator==(const Point3&, const Point3&) = default;
};

inline double dot(Point3 a, Point3 b) { return a.east * b.east + a.north * b.north + a.up * b.up; }
inline double norm(Point3 a) { return std::sqrt(dot(a, a)); }
inline double distance(Point3 a, Point3 b) { return norm(a - b); }
inline Point3 cross(Point3 a, Point3 b) {
  return {a.north * b.up - a.up * b.north, a.up * b.east - a.east * b.up,
          a.east * b.north - a.north * b.east};
}
inline bool is_finite(Point3 p) {
  return std::isfinite(p.east) && std::isfinite(p.north) && std::isfinite(p.up);
}

struct Point2 {
  double east = 0.0;
  double north = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct CrossSectionOffset {
  double lateral = 0.0;
  double vertical = 0.0;
  friend bool operator==(const CrossSectionOffset&, const CrossSectionOffset&) = default;
};

// Canonical along-corridor coordinates: arc length plus cross-section offsets.
struct ArcPosition {
  double s = 0.0;
  double lateral = 0.0;
  double vertical = 0.0;
  friend bool operator==(const ArcPosition&, const ArcPosition&) = default;
};

// Closed-open intervals are not used for time: windows overlap when their
// interiors intersect, so back-to-back windows do not conflict.
struct TimeWindow {
  double t_start = 0.0;
  double t_end = 0.0;

  bool overlaps(const TimeWindow& other) const {
    return t_start < other.t_end && other.t_start < t_end;
  }
  double duration() const { return t_end - t_start; }
  friend bool operator==(const TimeWindow&, const TimeWindow&) = default;
};

inline constexpr double kMaxPitchRatio = 0.5;
inline constexpr double kDefaultMinSegmentLength = 1e-3;
inline constexpr double kDefaultResolution = 1.0;

// Orthonormal cross-section frame of one segment: tangent, horizontal left
// axis, and their cross product (points up for level segments).
struct SegmentFrame {
  Point3 tangent;
  Point3 lateral;
  Point3 normal;
};

class Route {
 public:
  // build_route: validates and caches segment lengths.
  static Route build(std::vector<Point3> waypoints,
                     double min_segment_length = kDefaultMinSegmentLength);

  const std::vector<Point3>& waypoints() const { return waypoints_; }
  const std::vector<double>& segment_lengths() const { return segment_lengths_; }
  double total_length() const { return total_length_; }
  std::size_t segment_count() const { return segment_lengths_.size(); }

  // Arc length at the start of segment i.
  double segment_start(std::size_t i) const { return cumulative_[i]; }
  const SegmentFrame& frame(std::size_t i) const { return frames_[i]; }

  struct Locator {
    std::size_t segment;
    double fraction;
  };
  // Segment and fraction for an arc length, clamped to [0, total_length].
  Locator locate(double s) const;
  double arc_at(Locator loc) const;

  Point3 point_at(double s) const;
  Point3 point_at(Locator loc) const;
  // 3D position of cross-section coordinates, using the frame of the segment
  // that contains s.
  Point3 to_world(const ArcPosition& pos) const;

 private:
  Route() = default;

  std::vector<Point3> waypoints_;
  std::vector<double> segment_lengths_;
  std::vector<double> cumulative_;
  std::vector<SegmentFrame> frames_;
  double total_length_ = 0.0;
};

inline Route build_route(std::vector<Point3> waypoints) { return Route::build(std::move(waypoints)); }

struct Projection {
  ArcPosition arc;
  Point3 closest;
  double distance = 0.0;
};

// Closest centerline point. Nearest segment wins; ties go to the smaller s.
Projection project(const Point3& p, const Route& route);
inline ArcPosition project_to_route(const Point3& p, const Route& route) {
  return project(p, route).arc;
}

// Displaces each waypoint by `lateral` along the horizontal normal of the
// averaged vertex tangent and by `vertical` along world up.
Route offset_route(const Route& route, const CrossSectionOffset& offset);

class CorridorTube {
 public:
  CorridorTube(Route centerline, double outer_radius);

  const Route& centerline() const { return centerline_; }
  double outer_radius() const { return outer_radius_; }
  // Swept volume of the tube body (ignores end caps).
  double volume() const;

 private:
  Route centerline_;
  double outer_radius_;
};

class LaneCylinder {
 public:
  LaneCylinder(const Route& parent, CrossSectionOffset offset, double radius);

  const CrossSectionOffset& offset() const { return offset_; }
  double radius() const { return radius_; }
  const Route& centerline() const { return centerline_; }

 private:
  CrossSectionOffset offset_;
  double radius_;
  Route centerline_;
};

struct NoFlyZone {
  std::string id;
  std::vector<Point2> footprint;
  double alt_min = 0.0;
  double alt_max = 0.0;
  TimeWindow active_window;

  // Throws PreconditionViolated unless the polygon is simple with >= 3
  // vertices, alt_min < alt_max and the window is non-empty.
  void validate() const;
};

bool contains(const CorridorTube& tube, const Point3& p);
bool lane_contains(const LaneCylinder& lane, const Point3& p);

// Distance from a point to the (closed) zone prism; zero inside.
double distance_to_zone(const NoFlyZone& zone, const Point3& p);
bool point_in_polygon(std::span<const Point2> polygon, Point2 p);
double distance_to_polygon(std::span<const Point2> polygon, Point2 p);

// Samples the centerline every `resolution` meters (plus every waypoint) and
// reports whether any sample's tube ball touches the zone prism. Intrusions
// shallower than resolution^2 / (8 * radius) between samples can be missed.
bool intersects_nofly(const Route& centerline, double radius, const NoFlyZone& zone,
                      const TimeWindow& window, double resolution = kDefaultResolution);
bool intersects_nofly(const CorridorTube& tube, const NoFlyZone& zone,
                      const TimeWindow& window, double resolution = kDefaultResolution);
bool intersects_nofly(const LaneCylinder& lane, const NoFlyZone& zone,
                      const TimeWindow& window, double resolution = kDefaultResolution);

// Minimum over matched parent arc positions of centerline distance minus the
// two radii. Lanes derived from one parent share waypoint indices, so the
// minimum is evaluated exactly per segment.
double lane_clearance(const LaneCylinder& a, const LaneCylinder& b);

// Exact minimum distance between two polylines (segment-to-segment).
double polyline_distance(const Route& a, const Route& b);

// Points along the centerline: every waypoint plus interior samples no more
// than `resolution` apart.
std::vector<Point3> sample_centerline(const Route& route, double resolution);

// Maps arc length between two routes with equal waypoint counts by keeping
// the segment index and fraction.
double map_arc(const Route& from, const Route& to, double s);

}  // namespace corridrone::geometry
