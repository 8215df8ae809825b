#pragma once

// Deterministic discrete-time traffic through a planned corridor.
//
// Each UAV moves as a 1-D point mass along its lane. A step applies pending
// faults and operator commands, runs the speed controller for every UAV in
// descending along-track order (leaders first), advances positions, progresses
// lane changes and re-entry steering, admits queued spawns, then runs the
// containment and core-fence checks and records telemetry.
//
// The speed controller keeps the core-fence invariant exactly: a follower's
// speed is capped so that its spacing to the (already advanced) leader stays
// at or above min_headway, and a leader may not grow its rear clearance faster
// than it moves away from a stopped follower. Both caps are always feasible
// from a compliant state, so nominal runs never produce CoreOverlap.

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "corridrone/geofence.hpp"
#include "corridrone/lane_planner.hpp"

namespace corridrone::sim {

using fence::ComplianceLevel;
using geometry::Point3;
using lanes::LanePlan;

enum class Mode { Cruise, LaneChange, Landing, Aborted, Done };
enum class Health { Nominal, Faulted };

struct Mission {
  ComplianceLevel cl = ComplianceLevel::CL3;
  double v_target = 5.0;
  double uav_length = 0.5;
  double uav_span = 1.0;
};

struct UAVState {
  std::string id;
  ComplianceLevel cl = ComplianceLevel::CL3;
  std::string lane_id;
  double progress = 0.0;  // along-track in the lane's direction of travel
  double lateral = 0.0;   // cross-section offset from the lane centerline
  double vertical = 0.0;
  double speed = 0.0;
  double v_target = 0.0;
  double v_cap = 0.0;  // per-UAV ceiling, reduced by tolerated faults
  Mode mode = Mode::Cruise;
  Health health = Health::Nominal;
  double uav_length = 0.5;
  double uav_span = 1.0;
  double spawn_time = 0.0;
  std::uint64_t spawn_seq = 0;
  // Lane change bookkeeping: target lane and total cross-section delta.
  std::string change_target;
  double change_lateral = 0.0;
  double change_vertical = 0.0;
  double change_progress = 0.0;  // 0..1
  bool fault_pending = false;
  bool landing_pending = false;
  bool arrived = false;
};

struct SpawnStream {
  std::string lane_id;
  double rate_per_hour = 0.0;
  Mission mission;
  int max_count = -1;  // negative: unlimited
  double start_time = 0.0;
};

struct ScheduledSpawn {
  double t = 0.0;
  std::string lane_id;
  Mission mission;
};

struct Injection {
  enum class Kind { Fault, Disturbance, CommandLanding, LaneChange };
  double t = 0.0;
  std::string uav_id;
  Kind kind = Kind::Fault;
  double lateral = 0.0;
  double vertical = 0.0;
  std::string target_lane;
};

struct SimConfig {
  double dt = 0.1;
  std::uint64_t seed = 1;
  double duration = 600.0;
  std::vector<SpawnStream> streams;
  std::vector<ScheduledSpawn> scheduled;
  double v_min = 0.0;
  double v_max = 15.0;
  std::optional<double> stagger_min;  // default: 2 x d_t of the largest fence
  double headwind = 0.0;
  double degraded_speed_factor = 0.5;
  double proportional_band = 1.2;
  lanes::KinematicLimits limits;
  fence::FenceConfig fence;
  fence::EligibilityPolicy eligibility;
  bool record_telemetry = true;
  int telemetry_stride = 1;
  double metrics_warmup = 0.0;

  void validate() const;
};

enum class EventType {
  Spawn,
  SpawnDeferred,
  SpawnRejected,
  Breach,
  Fault,
  Disturbance,
  ModeChange,
  OperatorAlert,
  StaggerHold,
  LaneChangeStart,
  LaneChangeEnd,
  Arrival,
};

struct SimEvent {
  double t = 0.0;
  std::string uav_id;
  EventType type = EventType::Spawn;
  std::string lane;
  std::string detail;  // mode name, breach kind, reasons
  std::optional<fence::Severity> severity;
  std::optional<Point3> position;
};

struct TelemetryRow {
  double t = 0.0;
  std::string uav_id;
  std::string lane;
  double s = 0.0;  // arc length along the lane centerline
  double lateral = 0.0;
  double vertical = 0.0;
  double speed = 0.0;
  Mode mode = Mode::Cruise;
  Health health = Health::Nominal;
};

struct LaneMetrics {
  std::string lane;
  int spawned = 0;
  int completed = 0;
  int completed_after_warmup = 0;
  double throughput_per_hour = 0.0;
};

struct SimMetrics {
  std::vector<LaneMetrics> lanes;
  double min_same_lane_spacing = 0.0;  // infinity when never observed
  double min_headway_margin = 0.0;     // spacing - min_headway, min over pairs
  std::map<fence::BreachKind, int> breach_counts;
  int spawned = 0;
  int completed = 0;
  int landed = 0;
  int aborted = 0;
  int rejected = 0;
  long deferred_spawn_steps = 0;
  long stagger_interventions = 0;
  double min_stagger_offset = 0.0;  // infinity when no coupled pair observed
};

struct SimReport {
  std::vector<SimEvent> event_log;
  std::vector<TelemetryRow> telemetry;
  SimMetrics metrics;
};

struct SpawnOutcome {
  enum class Status { Spawned, Deferred, Rejected };
  Status status = Status::Spawned;
  std::string uav_id;
  std::vector<std::string> reasons;
};

class World {
 public:
  // Throws InvalidPlan when the plan does not validate.
  World(LanePlan plan, SimConfig cfg, std::vector<geometry::NoFlyZone> zones = {});

  const LanePlan& plan() const { return plan_; }
  const SimConfig& config() const { return cfg_; }
  double time() const { return time_; }
  std::uint64_t step_index() const { return step_; }
  double stagger_min() const { return stagger_min_; }

  void step();

  void inject_fault(const std::string& uav_id);
  void inject_disturbance(const std::string& uav_id, double lateral, double vertical = 0.0);
  void command_landing(const std::string& uav_id);
  void land_all();
  void request_lane_change(const std::string& uav_id, const std::string& target_lane);
  SpawnOutcome spawn(const std::string& lane_id, const Mission& mission);

  const std::vector<UAVState>& uavs() const { return active_; }
  const UAVState* find(const std::string& uav_id) const;
  bool all_done() const;
  bool streams_exhausted() const;

  // Position helpers shared with the checks and the tests.
  Point3 world_position(const UAVState& u) const;
  double lane_length(const std::string& lane_id) const;
  double lane_arc(const UAVState& u) const;
  double corridor_progress(const UAVState& u) const;
  fence::CoreGeofence fence_of(const UAVState& u) const;
  const std::vector<std::pair<std::string, std::string>>& coupled_pairs() const {
    return coupled_;
  }

  const std::vector<SimEvent>& events() const { return events_; }
  const std::vector<TelemetryRow>& telemetry() const { return telemetry_; }
  SimMetrics metrics() const;
  SimReport report() const;

  using EventSink = std::function<void(const SimEvent&)>;
  using TelemetrySink = std::function<void(const TelemetryRow&)>;
  void set_event_sink(EventSink sink) { event_sink_ = std::move(sink); }
  void set_telemetry_sink(TelemetrySink sink) { telemetry_sink_ = std::move(sink); }

  // Opaque serialized state (JSON text) for crash recovery.
  std::string snapshot() const;
  void restore(const std::string& snapshot);

 private:
  struct Pending {
    double arrival = 0.0;
    std::string uav_id;
    Mission mission;
    bool deferred_logged = false;
  };
  struct StreamState {
    std::mt19937_64 rng;
    double next_arrival = 0.0;
    int emitted = 0;
    bool exhausted = false;
  };

  // Lanes a UAV occupies: its own, plus the target during a lane change.
  struct LaneRefs {
    std::array<const std::string*, 2> ids{};
    int n = 0;
    struct It {
      const std::string* const* p;
      const std::string& operator*() const { return **p; }
      It& operator++() {
        ++p;
        return *this;
      }
      bool operator!=(const It& o) const { return p != o.p; }
    };
    It begin() const { return {ids.data()}; }
    It end() const { return {ids.data() + n}; }
  };
  struct LaneInfo {
    std::size_t index = 0;
    double length = 0.0;
    bool outflow = true;
  };

  UAVState* find_mut(const std::string& uav_id);
  const LaneInfo& info(const std::string& lane) const;
  const geometry::Route& lane_route(const std::string& lane) const;
  LaneRefs memberships(const UAVState& u) const;
  bool is_member(const UAVState& u, const std::string& lane) const;
  double progress_in(const UAVState& u, const std::string& lane) const;
  double speed_limit(const UAVState& u) const;
  double effective_v_max() const;
  std::string next_uav_id();
  double draw_interarrival(StreamState& s, double rate);

  void apply_pending();
  void control_and_advance(double t_next);
  void progress_cross_motion(double t_next);
  void admit_spawns(double t_next);
  bool entry_clear(const std::string& lane_id, const Mission& m, bool& stagger_blocked) const;
  void run_checks(double t_next);
  void record_telemetry(double t_next);
  void retire(double t_next);
  void emit(SimEvent e);
  void flush_events();

  LanePlan plan_;
  SimConfig cfg_;
  std::vector<geometry::NoFlyZone> zones_;
  std::vector<std::pair<std::string, std::string>> coupled_;
  std::map<std::string, std::vector<std::string>> partners_;
  double stagger_min_ = 0.0;
  std::map<std::string, LaneInfo> lane_info_;

  std::uint64_t step_ = 0;
  double time_ = 0.0;
  std::uint64_t id_counter_ = 0;
  std::vector<UAVState> active_;
  std::vector<UAVState> retired_;
  std::map<std::string, std::deque<Pending>> queues_;
  std::vector<StreamState> streams_;
  std::size_t scheduled_cursor_ = 0;
  fence::BreachDebouncer debounce_;
  std::map<std::string, bool> stagger_holding_;

  std::vector<SimEvent> batch_;
  std::vector<SimEvent> events_;
  std::vector<TelemetryRow> telemetry_;

  // metric accumulators
  std::map<std::string, LaneMetrics> lane_metrics_;
  std::map<fence::BreachKind, int> breach_counts_;
  double min_spacing_;
  double min_margin_;
  double min_stagger_;
  int landed_ = 0;
  int aborted_ = 0;
  int rejected_ = 0;
  long deferred_steps_ = 0;
  long stagger_interventions_ = 0;

  EventSink event_sink_;
  TelemetrySink telemetry_sink_;
};

// Batch driver: applies injections at their scheduled times, steps until
// cfg.duration, and returns the report.
SimReport run_scenario(const LanePlan& plan, const SimConfig& cfg,
                       const std::vector<Injection>& injections = {},
                       const std::vector<geometry::NoFlyZone>& zones = {});

std::string to_string(Mode m);
std::string to_string(Health h);
std::string to_string(EventType t);

// Stable on-disk forms: one JSON object per event line, and a CSV telemetry
// table with header t,uav_id,lane,s,lateral,vertical,speed,mode,health.
std::string format_event_line(const SimEvent& e);
std::string format_telemetry_csv(const std::vector<TelemetryRow>& rows);
std::string format_metrics_json(const SimMetrics& m);

}  // namespace corridrone::sim
