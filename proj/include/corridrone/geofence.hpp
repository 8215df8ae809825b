#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "corridrone/geometry.hpp"

namespace corridrone::fence {

using geometry::ArcPosition;
using geometry::CorridorTube;
using geometry::LaneCylinder;
using geometry::Point3;

enum class ComplianceLevel { CL1 = 1, CL2 = 2, CL3 = 3 };

enum class DetectionRange { Short, Mid, High };
enum class HealthMonitoring { None, GCSBased, Onboard };
enum class FaultResponse { None, LandImmediately, Tolerant };

// Capability row of a compliance level.
struct Capabilities {
  bool v2x = false;
  bool v2v = false;
  DetectionRange conflict_detection_range = DetectionRange::Short;
  HealthMonitoring health_monitoring = HealthMonitoring::None;
  bool endurance_round_trip = false;
  bool warning_module = false;
  bool fence_violation_warning = false;
  FaultResponse fault_response = FaultResponse::None;

  bool fault_tolerance() const { return fault_response == FaultResponse::Tolerant; }
};

Capabilities capabilities(ComplianceLevel cl);

struct FenceConfig {
  double tau_f = 2.0;  // s, forward reaction time
  double tau_r = 1.0;  // s, rear reaction time
  double d0 = 1.0;     // m, static margin
  std::map<ComplianceLevel, double> k{
      {ComplianceLevel::CL1, 2.0}, {ComplianceLevel::CL2, 1.5}, {ComplianceLevel::CL3, 1.0}};
  double cross_margin = 0.5;  // m

  double multiplier(ComplianceLevel cl) const;
  // Throws PreconditionViolated when the ordering constraints do not hold.
  void validate() const;
};

// Moving cuboid around one UAV. d_t = d_f + uav_length + d_r.
class CoreGeofence {
 public:
  CoreGeofence(double d_f, double d_r, double uav_length, double width, double height);

  double d_f() const { return d_f_; }
  double d_r() const { return d_r_; }
  double d_t() const { return d_t_; }
  double uav_length() const { return uav_length_; }
  double width() const { return width_; }
  double height() const { return height_; }

 private:
  double d_f_;
  double d_r_;
  double uav_length_;
  double d_t_;
  double width_;
  double height_;
};

CoreGeofence core_fence_dims(double v, ComplianceLevel cl, double uav_length, double uav_span,
                             const FenceConfig& cfg);

enum class BreachKind { LaneBreach, CorridorBreach, CoreOverlap };
enum class Severity { Warning, Safety };

struct BreachEvent {
  std::string uav_id;
  BreachKind kind = BreachKind::LaneBreach;
  double t = 0.0;
  Point3 position;
  Severity severity = Severity::Warning;
};

// Layered containment: nothing inside the lane, a Warning outside the lane,
// and Warning + Safety outside the corridor.
std::vector<BreachEvent> check_containment(const std::string& uav_id, const Point3& uav_pos,
                                           const LaneCylinder& lane, const CorridorTube& corridor,
                                           double t);

// Required centroid spacing; fences may touch but not overlap.
double min_headway(const CoreGeofence& leader, const CoreGeofence& follower);

// Fence placed in a lane frame. `progress` is the along-track coordinate in
// the direction of travel; lateral/vertical are cross-section coordinates.
struct PlacedFence {
  double progress = 0.0;
  double lateral = 0.0;
  double vertical = 0.0;
  CoreGeofence fence;
};

// Strict overlap of the along-track intervals and cross-section boxes.
// Evaluated through min_headway so that spacing >= min_headway is exactly
// equivalent to no overlap.
bool core_overlap(const PlacedFence& a, const PlacedFence& b);

struct EligibilityPolicy {
  double cl1_max_length = 2000.0;   // m
  double cl1_max_duration = 600.0;  // s
  double cl2_max_length = 10000.0;
  double cl2_max_duration = 1800.0;
};

enum class IneligibilityReason { ExceedsLength, ExceedsDuration };

struct Eligibility {
  bool eligible = true;
  std::vector<IneligibilityReason> reasons;
};

Eligibility mission_eligibility(ComplianceLevel cl, double mission_length, double duration,
                                const EligibilityPolicy& policy);

// Edge-triggered breach filter: a layer reports on the first violating check
// and again only after the UAV has been back inside.
class BreachDebouncer {
 public:
  std::vector<BreachEvent> filter(const std::string& key, std::vector<BreachEvent> raw);
  // For pairwise conditions (CoreOverlap): returns true on the rising edge.
  bool rising(const std::string& key, bool active);
  void clear(const std::string& key_prefix);

  const std::map<std::string, bool>& state() const { return active_; }
  void restore(std::map<std::string, bool> state) { active_ = std::move(state); }

 private:
  std::map<std::string, bool> active_;
};

std::string to_string(ComplianceLevel cl);
std::string to_string(BreachKind k);
std::string to_string(Severity s);
std::string to_string(IneligibilityReason r);

}  // namespace corridrone::fence
