#pragma once

// JSON forms of the domain types, shared by the scenario files, the UTM wire
// format, the service API and the journal. Parse failures become
// ValidationFailed errors whose details name the offending field.

#include <string>
#include <vector>

#include "json.hpp"

#include "corridrone/geofence.hpp"
#include "corridrone/lane_planner.hpp"
#include "corridrone/traffic_sim.hpp"

namespace corridrone::io {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline constexpr int kScenarioVersion = 1;

ordered_json to_json(const geometry::Point3& p);
ordered_json to_json(const geometry::TimeWindow& w);
ordered_json to_json(const geometry::NoFlyZone& z);
ordered_json to_json(const geometry::CorridorTube& t);
ordered_json to_json(const lanes::LanePlan& plan);
ordered_json to_json(const fence::FenceConfig& f);
ordered_json to_json(const fence::EligibilityPolicy& p);
ordered_json to_json(const lanes::KinematicLimits& l);
ordered_json to_json(const sim::Mission& m);
// Root form {fence, eligibility, limits, sim}; inverse of sim_config_from.
ordered_json to_json(const sim::SimConfig& c);
ordered_json to_json(const sim::SimEvent& e);
ordered_json to_json(const sim::TelemetryRow& r);

geometry::Point3 point_from(const json& j, const std::string& field);
geometry::TimeWindow window_from(const json& j, const std::string& field);
geometry::NoFlyZone zone_from(const json& j, const std::string& field);
std::vector<geometry::NoFlyZone> zones_from(const json& j, const std::string& field);
geometry::Route route_from(const json& j, const std::string& field);
geometry::CorridorTube tube_from(const json& j, const std::string& field);

lanes::CrossSectionLayout layout_from(const json& j, const std::string& field);
lanes::Distribution distribution_from(const json& j, const std::string& field);
fence::FenceConfig fence_from(const json& j, const std::string& field);
fence::EligibilityPolicy eligibility_from(const json& j, const std::string& field);
lanes::KinematicLimits limits_from(const json& j, const std::string& field);
fence::ComplianceLevel cl_from(const json& j, const std::string& field);
sim::Mission mission_from(const json& j, const std::string& field);

// Lane plan section: {route, corridor_radius, layout, distribution,
// lane_radius, roles?}.
lanes::LanePlan plan_from(const json& j, const std::string& field);

// Inverse of to_json(LanePlan): rebuilds the plan from its explicit lanes.
lanes::LanePlan lane_plan_from(const json& j, const std::string& field);

// Everything `simulate` needs.
struct SimScenario {
  lanes::LanePlan plan;
  sim::SimConfig cfg;
  std::vector<sim::Injection> injections;
  std::vector<geometry::NoFlyZone> zones;
};

// Fills the sim config from the "sim" section; fence/eligibility/limits come
// from their own top-level sections.
sim::SimConfig sim_config_from(const json& root);
SimScenario sim_scenario_from(const json& root);

// Plain json from an ordered document (the parsers take plain json).
json plain(const ordered_json& j);

json parse_text(const std::string& text, const std::string& what);
json read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
// Rejects unsupported "version" values.
void check_version(const json& root);

}  // namespace corridrone::io
