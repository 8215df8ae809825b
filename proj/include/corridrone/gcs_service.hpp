#pragma once

// Mission lifecycle: request intake, corridor options, airspace negotiation,
// the embedded simulation, operator commands and release.
//
// Every mission is event-sourced. The record is never edited directly: each
// change is appended to the mission journal (one JSON object per line) and
// then folded into the record by apply_entry(), so replaying a journal gives
// back the record the service held. The journal doubles as the mission's
// resumable stream; entry seq numbers are the stream positions.

#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "corridrone/geofence.hpp"
#include "corridrone/io.hpp"
#include "corridrone/lane_planner.hpp"
#include "corridrone/traffic_sim.hpp"
#include "corridrone/utm_protocol.hpp"

namespace corridrone::gcs {

using fence::ComplianceLevel;
using geometry::Point3;
using io::json;
using io::ordered_json;

enum class Utility { Factory, ShoreToShip, BorderPatrol, LastMile, Emergency, Agriculture };

enum class MissionStatus {
  Draft,
  OptionsReady,
  Negotiating,
  Allocated,
  Active,
  Completed,
  Aborted,
  Released,
};

bool transition_allowed(MissionStatus from, MissionStatus to);

struct Geodetic {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  double alt_m = 0.0;
};

// WGS84 geodetic -> local east/north/up about `origin`.
Point3 geodetic_to_enu(const Geodetic& p, const Geodetic& origin);

struct MissionRequest {
  Point3 start;        // ENU; only east/north are used
  Point3 destination;  // ENU; only east/north are used
  std::vector<Point3> via;
  double altitude = 100.0;  // operating altitude, m
  double expected_throughput = 0.0;  // vehicles/hour, whole corridor
  Utility utility = Utility::LastMile;
  double desired_duration = 0.0;  // s
  double time_of_day = 0.0;       // s since midnight; start of the window
  std::vector<ComplianceLevel> available_cls{ComplianceLevel::CL1, ComplianceLevel::CL2,
                                             ComplianceLevel::CL3};
};

// Parses and validates a request; geodetic points ({"lat","lon","alt"})
// need an origin.
MissionRequest request_from(const json& j, const std::optional<Geodetic>& origin);
ordered_json to_json(const MissionRequest& r);

struct ServiceConfig {
  fence::FenceConfig fence;
  fence::EligibilityPolicy eligibility;
  lanes::KinematicLimits limits;
  double v_max = 15.0;  // m/s, configured airframe ceiling before wind
  double lane_radius = 3.0;
  double stack_spacing = 8.0;
  double grid_h_spacing = 10.0;
  double grid_v_spacing = 8.0;
  double corridor_margin = 2.0;  // outer fence beyond the outermost lane
  double uav_length = 0.5;
  double uav_span = 1.0;
  double headroom = 1.25;        // capacity / demand counted as comfortable
  double buffer_fraction = 0.1;  // window buffer: max(fraction * duration, min)
  double buffer_min = 60.0;
  utm::AdjustmentPolicy adjust;
  int max_rounds = 5;
  std::optional<Geodetic> origin;
  std::vector<geometry::NoFlyZone> zones;  // always applied, on top of per-request ones
  std::string data_dir;                     // empty: in-memory only
  int snapshot_every = 100;                 // steps
  int telemetry_every = 10;                 // steps between journaled telemetry frames
  double sim_dt = 0.1;
};

ServiceConfig service_config_from(const json& j);

struct Environment {
  double wind = 0.0;  // m/s, headwind magnitude
};

struct CorridorOption {
  CorridorOption(std::string option_id, lanes::LanePlan lane_plan)
      : id(std::move(option_id)), plan(std::move(lane_plan)) {}

  std::string id;
  lanes::LanePlan plan;
  double v_min = 0.0;
  double v_max = 0.0;
  ComplianceLevel required_cl = ComplianceLevel::CL1;
  geometry::TimeWindow window;
  double capacity = 0.0;  // vehicles/hour at v_mid
  std::size_t coupled = 0;
  double volume = 0.0;
  double score = 0.0;
  std::string rationale;
};

ordered_json to_json(const CorridorOption& o);
CorridorOption option_from(const json& j);

// Pure option generation; throws Infeasible with the reasons as details.
std::vector<CorridorOption> generate_options(const MissionRequest& req, const Environment& env,
                                             const std::vector<geometry::NoFlyZone>& zones,
                                             const ServiceConfig& cfg);

struct OperatorCommand {
  enum class Kind { SelectOption, StartMission, AbortMission, CommandLanding, AcknowledgeWarning };
  Kind kind = Kind::StartMission;
  std::string option_id;
  std::string uav_id;
  std::string event_id;
};

OperatorCommand command_from(const json& j);

// {"kind": Fault|Disturbance|CommandLanding|LaneChange, "uav_id", "lateral",
// "vertical", "target_lane"}; the time field is ignored.
sim::Injection injection_from(const json& j);
ordered_json to_json(const sim::Injection& inj);

// One journal line.
struct JournalEntry {
  std::uint64_t seq = 0;
  std::string type;
  std::optional<std::uint64_t> step;  // sim step the entry belongs to
  ordered_json data;
};

ordered_json to_json(const JournalEntry& e);
JournalEntry entry_from(const json& j);

// Folds one entry into a record document. Throws IncompatibleStatus when the
// entry would leave the lifecycle graph.
void apply_entry(ordered_json& record, const JournalEntry& e);

// Rebuilds the record from a journal's lines; a torn final line is ignored.
ordered_json replay_journal(const std::vector<std::string>& lines);
ordered_json replay_journal_file(const std::string& path);

std::string to_string(MissionStatus s);
MissionStatus mission_status_from(const std::string& s);
std::string to_string(Utility u);

class Service {
 public:
  using Clock = std::function<double()>;  // mission clock, s since midnight

  // `transport` reaches the UTM authority; it must outlive the service.
  Service(ServiceConfig cfg, utm::Transport& transport, Clock clock = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  std::string ingest_mission(const MissionRequest& req);
  std::vector<CorridorOption> generate_options(const std::string& mission_id,
                                               const Environment& env,
                                               const std::vector<geometry::NoFlyZone>& zones);
  // Empty option id: use the option recorded by SelectOption.
  utm::AllocationRecord select_and_negotiate(const std::string& mission_id,
                                             const std::string& option_id);
  // Without a config the streams are derived from the request.
  void activate_and_run(const std::string& mission_id,
                        const std::optional<sim::SimConfig>& sim_cfg = std::nullopt);
  void handle_command(const std::string& mission_id, const OperatorCommand& cmd);
  // Test and drill hook: faults, disturbances, landings and lane changes on a
  // live mission, journaled like commands.
  void inject(const std::string& mission_id, const sim::Injection& inj);
  // Advances an active mission's simulation.
  void step(const std::string& mission_id, int steps = 1);
  ordered_json complete_and_release(const std::string& mission_id);

  ordered_json record(const std::string& mission_id) const;
  std::vector<std::string> mission_ids() const;
  MissionStatus status(const std::string& mission_id) const;
  // Journal entries with seq > since, at most `limit`.
  std::vector<JournalEntry> entries(const std::string& mission_id, std::uint64_t since,
                                    std::size_t limit = 1000) const;
  // Blocks until an entry with seq > since exists or the timeout passes.
  bool wait_for_entries(const std::string& mission_id, std::uint64_t since, int timeout_ms) const;
  // Live simulation state of an active mission, if any.
  std::optional<sim::SimMetrics> metrics(const std::string& mission_id) const;
  std::vector<sim::UAVState> uavs(const std::string& mission_id) const;

  // Steps every active mission in real time (factor x wall clock) until
  // stop_auto_run().
  void start_auto_run(double real_time_factor);
  void stop_auto_run();

  double now() const { return clock_(); }
  const ServiceConfig& config() const { return cfg_; }

 private:
  struct Mission;

  std::shared_ptr<Mission> get(const std::string& id) const;
  void append(Mission& m, std::string type, ordered_json data);
  void activate_locked(Mission& m, const std::optional<sim::SimConfig>& sim_cfg);
  void write_snapshot(Mission& m);
  void build_world(Mission& m, const sim::SimConfig& cfg);
  void step_locked(Mission& m, int steps);
  void journal_sim_output(Mission& m);
  void recover();
  void recover_mission(const std::string& id, const std::vector<std::string>& lines);
  utm::UtmClient& client(Mission& m);
  sim::SimConfig default_sim_config(const ordered_json& record) const;
  void finish_release(Mission& m);
  std::string journal_path(const std::string& id) const;
  std::string snapshot_path(const std::string& id) const;

  ServiceConfig cfg_;
  std::unique_ptr<utm::Transport> locked_;
  Clock clock_;
  std::string nonce_;  // keeps UTM session names unique across restarts
  mutable std::mutex mu_;  // guards missions_ and id_counter_
  std::map<std::string, std::shared_ptr<Mission>> missions_;
  std::uint64_t id_counter_ = 0;

  std::mutex run_mu_;
  std::condition_variable run_cv_;
  bool running_ = false;
  std::thread runner_;
};

}  // namespace corridrone::gcs
