#include "corridrone/geofence.hpp"

#include <cmath>

#include "corridrone/error.hpp"

namespace corridrone::fence {

Capabilities capabilities(ComplianceLevel cl) {
  Capabilities c;
  switch (cl) {
    case ComplianceLevel::CL1:
      c.v2x = true;
      c.conflict_detection_range = DetectionRange::Short;
      c.health_monitoring = HealthMonitoring::None;
      break;
    case ComplianceLevel::CL2:
      c.v2x = true;
      c.conflict_detection_range = DetectionRange::Mid;
      c.health_monitoring = HealthMonitoring::GCSBased;
      c.fence_violation_warning = true;
      c.fault_response = FaultResponse::LandImmediately;
      break;
    case ComplianceLevel::CL3:
      c.v2x = true;
      c.v2v = true;
      c.conflict_detection_range = DetectionRange::High;
      c.health_monitoring = HealthMonitoring::Onboard;
      c.endurance_round_trip = true;
      c.warning_module = true;
      c.fence_violation_warning = true;
      c.fault_response = FaultResponse::Tolerant;
      break;
  }
  return c;
}

double FenceConfig::multiplier(ComplianceLevel cl) const {
  auto it = k.find(cl);
  if (it == k.end()) fail(Errc::PreconditionViolated, "no fence multiplier for " + to_string(cl));
  return it->second;
}

void FenceConfig::validate() const {
  require(tau_r > 0.0 && tau_f >= tau_r, "fence config needs tau_f >= tau_r > 0");
  require(d0 > 0.0, "fence config needs d0 > 0");
  require(cross_margin >= 0.0, "fence config needs cross_margin >= 0");
  const double k1 = multiplier(ComplianceLevel::CL1);
  const double k2 = multiplier(ComplianceLevel::CL2);
  const double k3 = multiplier(ComplianceLevel::CL3);
  require(k1 > k2 && k2 > k3 && k3 > 0.0, "fence config needs k(CL1) > k(CL2) > k(CL3) > 0");
}

CoreGeofence::CoreGeofence(double d_f, double d_r, double uav_length, double width,
                           double height)
    : d_f_(d_f),
      d_r_(d_r),
      uav_length_(uav_length),
      d_t_(d_f + uav_length + d_r),
      width_(width),
      height_(height) {
  require(d_f > 0.0 && d_r > 0.0 && uav_length > 0.0 && width > 0.0 && height > 0.0,
          "core geofence dimensions must be > 0");
  require(d_f >= d_r, "core geofence needs d_f >= d_r");
}

CoreGeofence core_fence_dims(double v, ComplianceLevel cl, double uav_length, double uav_span,
                             const FenceConfig& cfg) {
  require(v >= 0.0, "speed must be >= 0");
  require(uav_length > 0.0 && uav_span > 0.0, "UAV dimensions must be > 0");
  const double k = cfg.multiplier(cl);
  const double d_f = k * (v * cfg.tau_f + cfg.d0);
  const double d_r = k * (v * cfg.tau_r + cfg.d0);
  const double side = uav_span + 2.0 * cfg.cross_margin;
  return CoreGeofence(d_f, d_r, uav_length, side, side);
}

std::vector<BreachEvent> check_containment(const std::string& uav_id, const Point3& uav_pos,
                                           const LaneCylinder& lane, const CorridorTube& corridor,
                                           double t) {
  std::vector<BreachEvent> out;
  if (geometry::lane_contains(lane, uav_pos)) return out;
  out.push_back({uav_id, BreachKind::LaneBreach, t, uav_pos, Severity::Warning});
  if (!geometry::contains(corridor, uav_pos)) {
    out.push_back({uav_id, BreachKind::CorridorBreach, t, uav_pos, Severity::Safety});
  }
  return out;
}

double min_headway(const CoreGeofence& leader, const CoreGeofence& follower) {
  return follower.d_f() + follower.uav_length() / 2.0 + leader.d_r() + leader.uav_length() / 2.0;
}

bool core_overlap(const PlacedFence& a, const PlacedFence& b) {
  const bool a_leads = a.progress >= b.progress;
  const PlacedFence& leader = a_leads ? a : b;
  const PlacedFence& follower = a_leads ? b : a;
  const double spacing = leader.progress - follower.progress;
  if (spacing >= min_headway(leader.fence, follower.fence)) return false;
  const bool lateral = std::abs(a.lateral - b.lateral) < 0.5 * (a.fence.width() + b.fence.width());
  const bool vertical =
      std::abs(a.vertical - b.vertical) < 0.5 * (a.fence.height() + b.fence.height());
  return lateral && vertical;
}

Eligibility mission_eligibility(ComplianceLevel cl, double mission_length, double duration,
                                const EligibilityPolicy& policy) {
  require(policy.cl1_max_length > 0 && policy.cl1_max_duration > 0 &&
              policy.cl2_max_length > 0 && policy.cl2_max_duration > 0,
          "eligibility thresholds must be positive");
  Eligibility e;
  double max_length = 0.0;
  double max_duration = 0.0;
  switch (cl) {
    case ComplianceLevel::CL3: return e;
    case ComplianceLevel::CL1:
      max_length = policy.cl1_max_length;
      max_duration = policy.cl1_max_duration;
      break;
    case ComplianceLevel::CL2:
      max_length = policy.cl2_max_length;
      max_duration = policy.cl2_max_duration;
      break;
  }
  if (mission_length > max_length) e.reasons.push_back(IneligibilityReason::ExceedsLength);
  if (duration > max_duration) e.reasons.push_back(IneligibilityReason::ExceedsDuration);
  e.eligible = e.reasons.empty();
  return e;
}

std::vector<BreachEvent> BreachDebouncer::filter(const std::string& key,
                                                 std::vector<BreachEvent> raw) {
  if (raw.empty()) {
    auto it = active_.lower_bound(key);
    if (it == active_.end() || it->first.compare(0, key.size(), key) != 0) return {};
  }
  bool lane = false;
  bool corridor = false;
  for (const auto& e : raw) {
    lane |= e.kind == BreachKind::LaneBreach;
    corridor |= e.kind == BreachKind::CorridorBreach;
  }
  const bool lane_edge = rising(key + "/lane", lane);
  const bool corridor_edge = rising(key + "/corridor", corridor);
  std::vector<BreachEvent> out;
  for (auto& e : raw) {
    if ((e.kind == BreachKind::LaneBreach && lane_edge) ||
        (e.kind == BreachKind::CorridorBreach && corridor_edge)) {
      out.push_back(std::move(e));
    }
  }
  return out;
}

bool BreachDebouncer::rising(const std::string& key, bool active) {
  if (!active) {
    active_.erase(key);
    return false;
  }
  bool& prev = active_[key];
  const bool edge = active && !prev;
  prev = true;
  return edge;
}

void BreachDebouncer::clear(const std::string& key_prefix) {
  for (auto it = active_.lower_bound(key_prefix);
       it != active_.end() && it->first.compare(0, key_prefix.size(), key_prefix) == 0;) {
    it = active_.erase(it);
  }
}

std::string to_string(ComplianceLevel cl) {
  switch (cl) {
    case ComplianceLevel::CL1: return "CL1";
    case ComplianceLevel::CL2: return "CL2";
    case ComplianceLevel::CL3: return "CL3";
  }
  return "?";
}

std::string to_string(BreachKind k) {
  switch (k) {
    case BreachKind::LaneBreach: return "LaneBreach";
    case BreachKind::CorridorBreach: return "CorridorBreach";
    case BreachKind::CoreOverlap: return "CoreOverlap";
  }
  return "?";
}

std::string to_string(Severity s) { return s == Severity::Warning ? "Warning" : "Safety"; }

std::string to_string(IneligibilityReason r) {
  return r == IneligibilityReason::ExceedsLength ? "ExceedsLength" : "ExceedsDuration";
}

}  // namespace corridrone::fence
