#include "corridrone/lane_planner.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "corridrone/error.hpp"

namespace corridrone::lanes {

namespace {

std::string lane_label(std::size_t i) { return "L" + std::to_string(i + 1); }

std::vector<std::pair<std::string, FlowDirection>> direction_map(const Distribution& dist) {
  using enum FlowDirection;
  switch (dist.kind) {
    case Distribution::Kind::A:
      return {{"L1", Inflow}, {"L2", Outflow}, {"L3", Outflow}, {"L4", Inflow}};
    case Distribution::Kind::B:
      return {{"L1", Inflow}, {"L2", Outflow}, {"L3", Inflow}, {"L4", Outflow}};
    case Distribution::Kind::BasicB:
      return {{"L2", Outflow}, {"L3", Inflow}};
    case Distribution::Kind::Custom:
      return dist.custom;
  }
  return {};
}

bool footprints_overlap(const LaneSpec& a, const LaneSpec& b) {
  return std::abs(a.offset.lateral - b.offset.lateral) < a.radius + b.radius;
}

}  // namespace

std::vector<std::pair<std::string, CrossSectionOffset>> CrossSectionLayout::slots() const {
  std::vector<std::pair<std::string, CrossSectionOffset>> out;
  switch (kind) {
    case Kind::VerticalStack: {
      require(count >= 1, "vertical stack needs at least one lane");
      require(spacing > 0.0, "vertical stack spacing must be > 0");
      const double top = 0.5 * (count - 1) * spacing;
      for (int i = 0; i < count; ++i) {
        out.emplace_back(lane_label(static_cast<std::size_t>(i)),
                         CrossSectionOffset{0.0, top - i * spacing});
      }
      break;
    }
    case Kind::Grid2x2: {
      require(h_spacing > 0.0 && v_spacing > 0.0, "grid spacings must be > 0");
      const double h = 0.5 * h_spacing;
      const double v = 0.5 * v_spacing;
      out = {{"L1", {+h, +v}}, {"L2", {-h, +v}}, {"L3", {+h, -v}}, {"L4", {-h, -v}}};
      break;
    }
    case Kind::Custom:
      require(!offsets.empty(), "custom layout needs at least one offset");
      for (std::size_t i = 0; i < offsets.size(); ++i) out.emplace_back(lane_label(i), offsets[i]);
      break;
  }
  return out;
}

LanePlan::LanePlan(CorridorTube corridor, std::vector<LaneSpec> lanes, CrossSectionLayout layout,
                   Distribution distribution)
    : corridor_(std::move(corridor)),
      lanes_(std::move(lanes)),
      layout_(std::move(layout)),
      distribution_(std::move(distribution)) {
  std::set<std::string> ids;
  for (const auto& l : lanes_) {
    require(ids.insert(l.id).second, "duplicate lane id " + l.id);
    cylinders_.emplace_back(corridor_.centerline(), l.offset, l.radius);
  }
}

std::optional<std::size_t> LanePlan::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < lanes_.size(); ++i) {
    if (lanes_[i].id == id) return i;
  }
  return std::nullopt;
}

const LaneSpec& LanePlan::lane(const std::string& id) const {
  auto i = index_of(id);
  if (!i) fail(Errc::PreconditionViolated, "unknown lane " + id);
  return lanes_[*i];
}

const LaneCylinder& LanePlan::cylinder(const std::string& id) const {
  auto i = index_of(id);
  if (!i) fail(Errc::PreconditionViolated, "unknown lane " + id);
  return cylinders_[*i];
}

LanePlan plan_lanes(const CorridorTube& corridor, const CrossSectionLayout& layout,
                    const Distribution& dist, double lane_radius,
                    const std::map<std::string, LaneRole>& roles) {
  require(lane_radius > 0.0, "lane radius must be > 0");
  const auto slots = layout.slots();
  const auto directions = direction_map(dist);

  if (dist.kind != Distribution::Kind::Custom && slots.size() != 4) {
    fail(Errc::DistributionLaneMismatch,
         "distributions A, B and BasicB are defined over exactly four lane slots");
  }
  std::set<std::string> named;
  for (const auto& [id, dir] : directions) {
    if (!named.insert(id).second) {
      fail(Errc::DistributionLaneMismatch, "lane " + id + " is assigned more than once");
    }
    const bool present = std::any_of(slots.begin(), slots.end(),
                                     [&](const auto& slot) { return slot.first == id; });
    if (!present) fail(Errc::DistributionLaneMismatch, "layout has no lane " + id);
  }
  if (dist.kind == Distribution::Kind::Custom && named.size() != slots.size()) {
    fail(Errc::DistributionLaneMismatch, "custom distribution must direct every layout lane");
  }

  std::vector<LaneSpec> lanes;
  for (const auto& [id, offset] : slots) {
    auto it = std::find_if(directions.begin(), directions.end(),
                           [&](const auto& d) { return d.first == id; });
    if (it == directions.end()) continue;
    if (std::hypot(offset.lateral, offset.vertical) + lane_radius > corridor.outer_radius()) {
      fail(Errc::LayoutTooLargeForCorridor, "lane " + id + " does not fit in the corridor");
    }
    LaneSpec spec{id, offset, lane_radius, it->second, LaneRole::Traffic};
    if (auto r = roles.find(id); r != roles.end()) spec.role = r->second;
    lanes.push_back(std::move(spec));
  }
  return LanePlan(corridor, std::move(lanes), layout, dist);
}

DownwashRisk downwash_risk(const LaneSpec& a, const LaneSpec& b) {
  if (!footprints_overlap(a, b)) return DownwashRisk::None;
  // Overlapping footprints at equal height are intersecting lanes; treat as the
  // worst case. validate_plan reports them as LaneOverlap.
  if (a.direction == b.direction) return DownwashRisk::Coupled;
  return a.offset.vertical == b.offset.vertical ? DownwashRisk::Coupled : DownwashRisk::Mitigated;
}

std::vector<RiskEntry> risk_matrix(const LanePlan& plan) {
  const auto& lanes = plan.lanes();
  std::vector<RiskEntry> out;
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    for (std::size_t j = i + 1; j < lanes.size(); ++j) {
      const LaneSpec& a = lanes[i];
      const LaneSpec& b = lanes[j];
      DownwashRisk risk = downwash_risk(a, b);
      if (risk != DownwashRisk::None) {
        const double lo = std::min(a.offset.vertical, b.offset.vertical);
        const double hi = std::max(a.offset.vertical, b.offset.vertical);
        for (std::size_t k = 0; k < lanes.size(); ++k) {
          if (k == i || k == j) continue;
          const LaneSpec& c = lanes[k];
          if (c.offset.vertical > lo && c.offset.vertical < hi && footprints_overlap(a, c) &&
              footprints_overlap(b, c)) {
            risk = DownwashRisk::None;
            break;
          }
        }
      }
      out.push_back({a.id, b.id, risk});
    }
  }
  return out;
}

std::size_t coupled_count(const LanePlan& plan) {
  const auto m = risk_matrix(plan);
  return static_cast<std::size_t>(std::count_if(
      m.begin(), m.end(), [](const RiskEntry& e) { return e.risk == DownwashRisk::Coupled; }));
}

ValidationReport validate_plan(const LanePlan& plan, const std::vector<NoFlyZone>& zones,
                               const TimeWindow& window, const ValidationSettings& settings) {
  ValidationReport report;
  const auto& lanes = plan.lanes();
  const auto& corridor = plan.corridor();

  for (std::size_t i = 0; i < lanes.size(); ++i) {
    for (std::size_t j = i + 1; j < lanes.size(); ++j) {
      if (geometry::lane_clearance(plan.cylinder_at(i), plan.cylinder_at(j)) <
          settings.min_lane_gap) {
        report.violations.push_back({Violation::Kind::LaneOverlap, lanes[i].id, lanes[j].id});
      }
    }
  }

  constexpr double kContainmentSlack = 1e-9;
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const auto& cyl = plan.cylinder_at(i);
    for (const auto& p : geometry::sample_centerline(cyl.centerline(), settings.resolution)) {
      const double d = geometry::project(p, corridor.centerline()).distance;
      if (d + cyl.radius() > corridor.outer_radius() + kContainmentSlack) {
        report.violations.push_back({Violation::Kind::LaneOutsideCorridor, lanes[i].id, {}});
        break;
      }
    }
  }

  for (std::size_t i = 0; i < lanes.size(); ++i) {
    for (const auto& zone : zones) {
      if (geometry::intersects_nofly(plan.cylinder_at(i), zone, window, settings.resolution)) {
        report.violations.push_back({Violation::Kind::NoFlyConflict, lanes[i].id, zone.id});
      }
    }
  }

  report.risks = risk_matrix(plan);
  return report;
}

std::vector<ArcPosition> lane_change_path(const LanePlan& plan, const LaneSpec& from,
                                          const LaneSpec& to, double s_start, double v,
                                          const KinematicLimits& limits, double sample_spacing) {
  require(v > 0.0, "lane change speed must be > 0");
  require(limits.max_cross_speed > 0.0, "max_cross_speed must be > 0");
  require(sample_spacing > 0.0, "sample spacing must be > 0");
  require(plan.index_of(from.id).has_value() && plan.index_of(to.id).has_value(),
          "both lanes must belong to the plan");
  if (from.direction != to.direction && to.role != LaneRole::Emergency) {
    fail(Errc::IncompatibleDirections, "lane change " + from.id + " -> " + to.id +
                                           " crosses opposing traffic");
  }

  const double d_lat = to.offset.lateral - from.offset.lateral;
  const double d_vert = to.offset.vertical - from.offset.vertical;
  std::vector<ArcPosition> path;
  if (d_lat == 0.0 && d_vert == 0.0) return path;

  const double sign = from.direction == FlowDirection::Outflow ? 1.0 : -1.0;
  const double ratio = v / limits.max_cross_speed;
  ArcPosition cursor{s_start, from.offset.lateral, from.offset.vertical};
  path.push_back(cursor);

  auto leg = [&](double delta, bool lateral) {
    if (delta == 0.0) return;
    const double arc = std::abs(delta) * ratio;
    const auto steps = static_cast<int>(std::ceil(arc / sample_spacing));
    const ArcPosition origin = cursor;
    for (int k = 1; k <= steps; ++k) {
      const double f = static_cast<double>(k) / steps;
      ArcPosition p = origin;
      p.s = origin.s + sign * f * arc;
      (lateral ? p.lateral : p.vertical) += f * delta;
      path.push_back(p);
    }
    cursor = path.back();
  };
  leg(d_lat, true);
  leg(d_vert, false);

  const auto& tube = plan.corridor();
  const double length = tube.centerline().total_length();
  for (const auto& p : path) {
    if (p.s < 0.0 || p.s > length ||
        !geometry::contains(tube, tube.centerline().to_world(p))) {
      fail(Errc::ManeuverExitsCorridor, "lane change leaves the corridor near s=" +
                                            std::to_string(p.s));
    }
  }
  return path;
}

double throughput_capacity(const LaneSpec& lane, double v, double headway) {
  require(lane.radius > 0.0, "lane radius must be > 0");
  require(v > 0.0, "speed must be > 0");
  require(headway > 0.0, "headway must be > 0");
  return 3600.0 * v / headway;
}

std::string to_string(FlowDirection d) { return d == FlowDirection::Inflow ? "Inflow" : "Outflow"; }

std::string to_string(LaneRole r) {
  switch (r) {
    case LaneRole::Traffic: return "Traffic";
    case LaneRole::Service: return "Service";
    case LaneRole::Emergency: return "Emergency";
  }
  return "?";
}

std::string to_string(DownwashRisk r) {
  switch (r) {
    case DownwashRisk::None: return "None";
    case DownwashRisk::Mitigated: return "Mitigated";
    case DownwashRisk::Coupled: return "Coupled";
  }
  return "?";
}

std::string to_string(Distribution::Kind k) {
  switch (k) {
    case Distribution::Kind::A: return "A";
    case Distribution::Kind::B: return "B";
    case Distribution::Kind::BasicB: return "BasicB";
    case Distribution::Kind::Custom: return "Custom";
  }
  return "?";
}

std::string to_string(CrossSectionLayout::Kind k) {
  switch (k) {
    case CrossSectionLayout::Kind::VerticalStack: return "VerticalStack";
    case CrossSectionLayout::Kind::Grid2x2: return "Grid2x2";
    case CrossSectionLayout::Kind::Custom: return "Custom";
  }
  return "?";
}

}  // namespace corridrone::lanes
