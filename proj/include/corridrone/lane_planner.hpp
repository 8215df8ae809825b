#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "corridrone/geometry.hpp"

namespace corridrone::lanes {

using geometry::ArcPosition;
using geometry::CorridorTube;
using geometry::CrossSectionOffset;
using geometry::LaneCylinder;
using geometry::NoFlyZone;
using geometry::TimeWindow;

// Outflow travels along increasing corridor arc length (start -> destination),
// Inflow travels back toward the start.
enum class FlowDirection { Inflow, Outflow };
enum class LaneRole { Traffic, Service, Emergency };
enum class DownwashRisk { None, Mitigated, Coupled };

struct LaneSpec {
  std::string id;
  CrossSectionOffset offset;
  double radius = 0.0;
  FlowDirection direction = FlowDirection::Outflow;
  LaneRole role = LaneRole::Traffic;
};

struct Distribution {
  enum class Kind { A, B, BasicB, Custom };
  Kind kind = Kind::A;
  std::vector<std::pair<std::string, FlowDirection>> custom;

  static Distribution a() { return {Kind::A, {}}; }
  static Distribution b() { return {Kind::B, {}}; }
  static Distribution basic_b() { return {Kind::BasicB, {}}; }
  static Distribution make_custom(std::vector<std::pair<std::string, FlowDirection>> map) {
    return {Kind::Custom, std::move(map)};
  }
};

struct CrossSectionLayout {
  enum class Kind { VerticalStack, Grid2x2, Custom };
  Kind kind = Kind::VerticalStack;
  int count = 4;          // VerticalStack
  double spacing = 0.0;   // VerticalStack
  double h_spacing = 0.0; // Grid2x2
  double v_spacing = 0.0; // Grid2x2
  std::vector<CrossSectionOffset> offsets;  // Custom, labelled L1..Ln in order

  static CrossSectionLayout vertical_stack(double spacing, int count = 4) {
    CrossSectionLayout l;
    l.kind = Kind::VerticalStack;
    l.count = count;
    l.spacing = spacing;
    return l;
  }
  static CrossSectionLayout grid_2x2(double h_spacing, double v_spacing) {
    CrossSectionLayout l;
    l.kind = Kind::Grid2x2;
    l.h_spacing = h_spacing;
    l.v_spacing = v_spacing;
    return l;
  }
  static CrossSectionLayout custom(std::vector<CrossSectionOffset> offsets) {
    CrossSectionLayout l;
    l.kind = Kind::Custom;
    l.offsets = std::move(offsets);
    return l;
  }

  // Slot ids and offsets in numbering order: VerticalStack top to bottom,
  // Grid2x2 L1 top-left, L2 top-right, L3 bottom-left, L4 bottom-right, as
  // seen looking along the direction of travel.
  std::vector<std::pair<std::string, CrossSectionOffset>> slots() const;
};

struct KinematicLimits {
  double max_cross_speed = 1.0;  // m/s, lateral/vertical
  double max_speed = 15.0;       // m/s, along track
  double max_accel = 2.0;        // m/s^2, along track
};

class LanePlan {
 public:
  LanePlan(CorridorTube corridor, std::vector<LaneSpec> lanes, CrossSectionLayout layout,
           Distribution distribution);

  const CorridorTube& corridor() const { return corridor_; }
  const std::vector<LaneSpec>& lanes() const { return lanes_; }
  const CrossSectionLayout& layout() const { return layout_; }
  const Distribution& distribution() const { return distribution_; }

  const LaneSpec& lane(const std::string& id) const;
  const LaneCylinder& cylinder(const std::string& id) const;
  std::optional<std::size_t> index_of(const std::string& id) const;
  const LaneCylinder& cylinder_at(std::size_t i) const { return cylinders_[i]; }

 private:
  CorridorTube corridor_;
  std::vector<LaneSpec> lanes_;
  std::vector<LaneCylinder> cylinders_;
  CrossSectionLayout layout_;
  Distribution distribution_;
};

LanePlan plan_lanes(const CorridorTube& corridor, const CrossSectionLayout& layout,
                    const Distribution& dist, double lane_radius,
                    const std::map<std::string, LaneRole>& roles = {});

// Pairwise classification from the two lanes alone.
DownwashRisk downwash_risk(const LaneSpec& a, const LaneSpec& b);

struct RiskEntry {
  std::string a;
  std::string b;
  DownwashRisk risk = DownwashRisk::None;
};

// Plan-level risk: like downwash_risk, except that a stacked pair with
// another lane between them in the same column is shielded (None). Only
// vertically adjacent lanes interact.
std::vector<RiskEntry> risk_matrix(const LanePlan& plan);
std::size_t coupled_count(const LanePlan& plan);

struct Violation {
  enum class Kind { LaneOverlap, LaneOutsideCorridor, NoFlyConflict };
  Kind kind;
  std::string lane;
  std::string other;  // second lane for LaneOverlap, zone id for NoFlyConflict
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::vector<RiskEntry> risks;
  bool valid() const { return violations.empty(); }
};

struct ValidationSettings {
  double min_lane_gap = 1.0;
  double resolution = geometry::kDefaultResolution;
};

ValidationReport validate_plan(const LanePlan& plan, const std::vector<NoFlyZone>& zones,
                               const TimeWindow& window, const ValidationSettings& settings = {});

// Transition path in corridor cross-section coordinates. Horizontal leg first,
// then vertical; each leg spans |delta| * v / max_cross_speed meters of arc.
// Samples are at most `sample_spacing` meters of arc apart and include both
// ends of every leg.
std::vector<ArcPosition> lane_change_path(const LanePlan& plan, const LaneSpec& from,
                                          const LaneSpec& to, double s_start, double v,
                                          const KinematicLimits& limits,
                                          double sample_spacing = 1.0);

double throughput_capacity(const LaneSpec& lane, double v, double headway);

std::string to_string(FlowDirection d);
std::string to_string(LaneRole r);
std::string to_string(DownwashRisk r);
std::string to_string(Distribution::Kind k);
std::string to_string(CrossSectionLayout::Kind k);

}  // namespace corridrone::lanes
