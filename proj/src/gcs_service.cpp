#include "corridrone/gcs_service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "corridrone/error.hpp"

namespace corridrone::gcs {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

[[noreturn]] void incompatible(const std::string& what, MissionStatus s) {
  fail(Errc::IncompatibleStatus, what + " not allowed in status " + to_string(s), {to_string(s)});
}

// Serializes exchanges when several missions share one transport.
class LockedTransport : public utm::Transport {
 public:
  explicit LockedTransport(utm::Transport& inner) : inner_(inner) {}
  utm::Envelope exchange(const utm::Envelope& msg) override {
    std::lock_guard lock(mu_);
    return inner_.exchange(msg);
  }

 private:
  utm::Transport& inner_;
  std::mutex mu_;
};

double system_clock_of_day() {
  using namespace std::chrono;
  const auto now = system_clock::now().time_since_epoch();
  const double s = duration<double>(now).count();
  return std::fmod(s, 86400.0);
}

double time_of_day_from(const json& j, const std::string& field,
                        std::vector<std::string>& errors) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    int h = 0, m = 0, s = 0;
    const auto text = j.get<std::string>();
    const int n = std::sscanf(text.c_str(), "%d:%d:%d", &h, &m, &s);
    if (n >= 2 && h >= 0 && h < 24 && m >= 0 && m < 60 && s >= 0 && s < 60)
      return h * 3600.0 + m * 60.0 + s;
  }
  errors.push_back(field);
  return 0.0;
}

ordered_json round_json(const utm::RoundLog& r) {
  ordered_json j;
  j["round"] = r.round;
  j["proposed"] = utm::to_json(r.proposed);
  j["cost"] = r.cost;
  j["conflicts"] = r.conflicts;
  j["adjustment"] = r.adjustment;
  return j;
}

bool same_tube(const utm::AirspaceVolume& a, const utm::AirspaceVolume& b) {
  return a.tube.outer_radius() == b.tube.outer_radius() &&
         a.tube.centerline().waypoints() == b.tube.centerline().waypoints();
}

bool is_warning(const ordered_json& event) {
  return event.contains("severity") || event.value("type", "") == "OperatorAlert";
}

bool is_sim_entry(const std::string& type) { return type == "SimEvent" || type == "Telemetry"; }

std::string command_name(OperatorCommand::Kind k) {
  switch (k) {
    case OperatorCommand::Kind::SelectOption: return "SelectOption";
    case OperatorCommand::Kind::StartMission: return "StartMission";
    case OperatorCommand::Kind::AbortMission: return "AbortMission";
    case OperatorCommand::Kind::CommandLanding: return "CommandLanding";
    case OperatorCommand::Kind::AcknowledgeWarning: return "AcknowledgeWarning";
  }
  return "?";
}

ordered_json command_json(const OperatorCommand& c) {
  ordered_json j;
  j["type"] = command_name(c.kind);
  if (!c.option_id.empty()) j["option_id"] = c.option_id;
  if (!c.uav_id.empty()) j["uav_id"] = c.uav_id;
  if (!c.event_id.empty()) j["event_id"] = c.event_id;
  return j;
}

std::vector<ComplianceLevel> ordered_cls(std::vector<ComplianceLevel> cls) {
  std::sort(cls.begin(), cls.end());
  cls.erase(std::unique(cls.begin(), cls.end()), cls.end());
  return cls;
}

}  // namespace

// ---- statuses ----

bool transition_allowed(MissionStatus from, MissionStatus to) {
  using S = MissionStatus;
  switch (from) {
    case S::Draft: return to == S::OptionsReady;
    case S::OptionsReady: return to == S::Negotiating;
    case S::Negotiating: return to == S::Allocated || to == S::OptionsReady;
    case S::Allocated: return to == S::Active || to == S::Aborted;
    case S::Active: return to == S::Completed || to == S::Aborted;
    case S::Completed: return to == S::Released;
    case S::Aborted: return to == S::Released;
    case S::Released: return false;
  }
  return false;
}

std::string to_string(MissionStatus s) {
  switch (s) {
    case MissionStatus::Draft: return "Draft";
    case MissionStatus::OptionsReady: return "OptionsReady";
    case MissionStatus::Negotiating: return "Negotiating";
    case MissionStatus::Allocated: return "Allocated";
    case MissionStatus::Active: return "Active";
    case MissionStatus::Completed: return "Completed";
    case MissionStatus::Aborted: return "Aborted";
    case MissionStatus::Released: return "Released";
  }
  return "?";
}

MissionStatus mission_status_from(const std::string& s) {
  for (auto st : {MissionStatus::Draft, MissionStatus::OptionsReady, MissionStatus::Negotiating,
                  MissionStatus::Allocated, MissionStatus::Active, MissionStatus::Completed,
                  MissionStatus::Aborted, MissionStatus::Released}) {
    if (to_string(st) == s) return st;
  }
  fail(Errc::Parse, "unknown mission status " + s);
}

constexpr Utility kUtilities[] = {Utility::Factory,   Utility::ShoreToShip, Utility::BorderPatrol,
                                  Utility::LastMile,  Utility::Emergency,   Utility::Agriculture};

std::string to_string(Utility u) {
  switch (u) {
    case Utility::Factory: return "Factory";
    case Utility::ShoreToShip: return "ShoreToShip";
    case Utility::BorderPatrol: return "BorderPatrol";
    case Utility::LastMile: return "LastMile";
    case Utility::Emergency: return "Emergency";
    case Utility::Agriculture: return "Agriculture";
  }
  return "?";
}

// ---- geodetic ----

Point3 geodetic_to_enu(const Geodetic& p, const Geodetic& origin) {
  constexpr double a = 6378137.0;
  constexpr double f = 1.0 / 298.257223563;
  constexpr double e2 = f * (2.0 - f);
  auto ecef = [&](const Geodetic& g) {
    const double lat = g.lat_deg * kPi / 180.0, lon = g.lon_deg * kPi / 180.0;
    const double n = a / std::sqrt(1.0 - e2 * std::sin(lat) * std::sin(lat));
    return Point3{(n + g.alt_m) * std::cos(lat) * std::cos(lon),
                  (n + g.alt_m) * std::cos(lat) * std::sin(lon),
                  (n * (1.0 - e2) + g.alt_m) * std::sin(lat)};
  };
  const Point3 d = ecef(p) - ecef(origin);
  const double lat = origin.lat_deg * kPi / 180.0, lon = origin.lon_deg * kPi / 180.0;
  const double sl = std::sin(lat), cl = std::cos(lat), so = std::sin(lon), co = std::cos(lon);
  return {-so * d.east + co * d.north,
          -sl * co * d.east - sl * so * d.north + cl * d.up,
          cl * co * d.east + cl * so * d.north + sl * d.up};
}

// ---- request ----

namespace {

Point3 point_of(const json& j, const std::string& field, const std::optional<Geodetic>& origin,
                std::vector<std::string>& errors) {
  if (j.is_object() && j.contains("lat") && j.contains("lon")) {
    if (!origin) {
      errors.push_back(field + " (geodetic input needs an origin)");
      return {};
    }
    try {
      return geodetic_to_enu({j.at("lat").get<double>(), j.at("lon").get<double>(),
                              j.value("alt", 0.0)},
                             *origin);
    } catch (const json::exception&) {
      errors.push_back(field);
      return {};
    }
  }
  try {
    return io::point_from(j, field);
  } catch (const Error&) {
    errors.push_back(field);
    return {};
  }
}

template <typename T>
T number_at(const json& j, const std::string& key, std::vector<std::string>& errors, T fallback,
            bool required) {
  if (!j.contains(key) || j.at(key).is_null()) {
    if (required) errors.push_back(key);
    return fallback;
  }
  if (!j.at(key).is_number()) {
    errors.push_back(key);
    return fallback;
  }
  return j.at(key).get<T>();
}

}  // namespace

MissionRequest request_from(const json& j, const std::optional<Geodetic>& origin) {
  if (!j.is_object()) fail(Errc::ValidationFailed, "mission request must be an object", {"request"});
  std::vector<std::string> errors;
  MissionRequest r;
  if (j.contains("start")) r.start = point_of(j.at("start"), "start", origin, errors);
  else errors.push_back("start");
  if (j.contains("destination"))
    r.destination = point_of(j.at("destination"), "destination", origin, errors);
  else errors.push_back("destination");
  if (j.contains("via")) {
    if (!j.at("via").is_array()) errors.push_back("via");
    else {
      for (std::size_t i = 0; i < j.at("via").size(); ++i)
        r.via.push_back(point_of(j.at("via")[i], "via[" + std::to_string(i) + "]", origin, errors));
    }
  }
  r.altitude = number_at<double>(j, "altitude", errors, 0.0, true);
  r.expected_throughput = number_at<double>(j, "expected_throughput", errors, 0.0, true);
  r.desired_duration = number_at<double>(j, "desired_duration", errors, 0.0, true);
  if (j.contains("time_of_day")) r.time_of_day = time_of_day_from(j.at("time_of_day"), "time_of_day", errors);
  if (j.contains("utility")) {
    const auto u = j.at("utility");
    bool found = false;
    for (auto cand : kUtilities) {
      if (u == to_string(cand)) {
        r.utility = cand;
        found = true;
      }
    }
    if (!found) errors.push_back("utility");
  }
  if (j.contains("available_cls")) {
    r.available_cls.clear();
    const auto& arr = j.at("available_cls");
    if (!arr.is_array()) errors.push_back("available_cls");
    else {
      for (std::size_t i = 0; i < arr.size(); ++i) {
        try {
          r.available_cls.push_back(io::cl_from(arr[i], "available_cls"));
        } catch (const Error&) {
          errors.push_back("available_cls[" + std::to_string(i) + "]");
        }
      }
    }
  }
  if (std::find(errors.begin(), errors.end(), "start") == errors.end() &&
      std::find(errors.begin(), errors.end(), "destination") == errors.end() &&
      std::hypot(r.start.east - r.destination.east, r.start.north - r.destination.north) == 0.0)
    errors.push_back("destination (equals start)");
  if (!(r.expected_throughput > 0.0) &&
      std::find(errors.begin(), errors.end(), "expected_throughput") == errors.end())
    errors.push_back("expected_throughput (must be > 0)");
  if (!(r.desired_duration > 0.0) &&
      std::find(errors.begin(), errors.end(), "desired_duration") == errors.end())
    errors.push_back("desired_duration (must be > 0)");
  if (!(r.altitude > 0.0) && std::find(errors.begin(), errors.end(), "altitude") == errors.end())
    errors.push_back("altitude (must be > 0)");
  if (!(r.time_of_day >= 0.0 && r.time_of_day < 86400.0)) errors.push_back("time_of_day");
  if (r.available_cls.empty() &&
      std::find(errors.begin(), errors.end(), "available_cls") == errors.end())
    errors.push_back("available_cls (empty)");
  if (!errors.empty()) {
    std::string msg = "invalid mission request:";
    for (const auto& e : errors) msg += " " + e;
    fail(Errc::ValidationFailed, msg, errors);
  }
  return r;
}

ordered_json to_json(const MissionRequest& r) {
  ordered_json j;
  j["start"] = io::to_json(r.start);
  j["destination"] = io::to_json(r.destination);
  j["via"] = ordered_json::array();
  for (const auto& p : r.via) j["via"].push_back(io::to_json(p));
  j["altitude"] = r.altitude;
  j["expected_throughput"] = r.expected_throughput;
  j["utility"] = to_string(r.utility);
  j["desired_duration"] = r.desired_duration;
  j["time_of_day"] = r.time_of_day;
  j["available_cls"] = ordered_json::array();
  for (auto cl : r.available_cls) j["available_cls"].push_back(fence::to_string(cl));
  return j;
}

// ---- config ----

ServiceConfig service_config_from(const json& j) {
  ServiceConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) fail(Errc::ValidationFailed, "service config must be an object", {"config"});
  io::check_version(j);
  c.fence = io::fence_from(j.value("fence", json()), "fence");
  c.eligibility = io::eligibility_from(j.value("eligibility", json()), "eligibility");
  c.limits = io::limits_from(j.value("limits", json()), "limits");
  const json s = j.value("service", json::object());
  auto num = [&](const char* key, double& out) {
    if (s.contains(key)) {
      if (!s.at(key).is_number())
        fail(Errc::ValidationFailed, std::string("service.") + key + ": wrong type",
             {std::string("service.") + key});
      out = s.at(key).get<double>();
    }
  };
  num("v_max", c.v_max);
  num("lane_radius", c.lane_radius);
  num("stack_spacing", c.stack_spacing);
  num("grid_h_spacing", c.grid_h_spacing);
  num("grid_v_spacing", c.grid_v_spacing);
  num("corridor_margin", c.corridor_margin);
  num("uav_length", c.uav_length);
  num("uav_span", c.uav_span);
  num("headroom", c.headroom);
  num("buffer_fraction", c.buffer_fraction);
  num("buffer_min", c.buffer_min);
  num("sim_dt", c.sim_dt);
  c.max_rounds = s.value("max_rounds", c.max_rounds);
  c.snapshot_every = s.value("snapshot_every", c.snapshot_every);
  c.telemetry_every = s.value("telemetry_every", c.telemetry_every);
  c.data_dir = s.value("data_dir", c.data_dir);
  if (s.contains("adjust")) {
    const auto& a = s.at("adjust");
    c.adjust.time_shift = a.value("time_shift", c.adjust.time_shift);
    c.adjust.altitude_shift = a.value("altitude_shift", c.adjust.altitude_shift);
    c.adjust.radius_shrink = a.value("radius_shrink", c.adjust.radius_shrink);
    c.adjust.min_radius = a.value("min_radius", c.adjust.min_radius);
  }
  if (j.contains("origin") && !j.at("origin").is_null()) {
    const auto& o = j.at("origin");
    c.origin = Geodetic{o.at("lat").get<double>(), o.at("lon").get<double>(), o.value("alt", 0.0)};
  }
  c.zones = io::zones_from(j.value("zones", json()), "zones");
  if (!(c.lane_radius > 0 && c.v_max > 0 && c.max_rounds > 0 && c.snapshot_every > 0 &&
        c.telemetry_every > 0 && c.sim_dt > 0 && c.corridor_margin >= 0))
    fail(Errc::ValidationFailed, "service: parameters out of range", {"service"});
  return c;
}

// ---- options ----

ordered_json to_json(const CorridorOption& o) {
  ordered_json j;
  j["id"] = o.id;
  j["corridor"] = io::to_json(o.plan.corridor());
  j["lane_plan"] = io::to_json(o.plan);
  j["v_bounds"] = ordered_json::array({o.v_min, o.v_max});
  j["required_cl"] = fence::to_string(o.required_cl);
  j["active_window"] = io::to_json(o.window);
  j["capacity"] = o.capacity;
  j["coupled_pairs"] = o.coupled;
  j["volume"] = o.volume;
  j["score"] = o.score;
  j["rationale"] = o.rationale;
  return j;
}

CorridorOption option_from(const json& j) {
  CorridorOption o{j.at("id").get<std::string>(),
                   io::lane_plan_from(j.at("lane_plan"), "lane_plan")};
  o.v_min = j.at("v_bounds").at(0).get<double>();
  o.v_max = j.at("v_bounds").at(1).get<double>();
  o.required_cl = io::cl_from(j.at("required_cl"), "required_cl");
  o.window = io::window_from(j.at("active_window"), "active_window");
  o.capacity = j.at("capacity").get<double>();
  o.coupled = j.at("coupled_pairs").get<std::size_t>();
  o.volume = j.at("volume").get<double>();
  o.score = j.at("score").get<double>();
  o.rationale = j.at("rationale").get<std::string>();
  return o;
}

namespace {

geometry::Route mission_route(const MissionRequest& req) {
  std::vector<Point3> pts;
  pts.push_back({req.start.east, req.start.north, req.altitude});
  for (const auto& v : req.via) pts.push_back({v.east, v.north, req.altitude});
  pts.push_back({req.destination.east, req.destination.north, req.altitude});
  try {
    return geometry::build_route(std::move(pts));
  } catch (const Error& e) {
    fail(Errc::ValidationFailed, std::string("route: ") + e.what(), {"via"});
  }
}

std::vector<std::string> used_lanes(const lanes::Distribution& d) {
  if (d.kind == lanes::Distribution::Kind::BasicB) return {"L2", "L3"};
  return {"L1", "L2", "L3", "L4"};
}

}  // namespace

std::vector<CorridorOption> generate_options(const MissionRequest& req, const Environment& env,
                                             const std::vector<geometry::NoFlyZone>& zones,
                                             const ServiceConfig& cfg) {
  const auto route = mission_route(req);
  const double length = route.total_length();
  const double v_min = length / req.desired_duration;
  const double v_max = std::min(cfg.limits.max_speed, cfg.v_max - std::abs(env.wind));
  if (v_min > v_max)
    fail(Errc::Infeasible,
         fmt::format("v_min {:.3f} m/s exceeds v_max {:.3f} m/s", v_min, v_max),
         {"VMinExceedsVMax"});

  std::vector<ComplianceLevel> eligible;
  for (auto cl : ordered_cls(req.available_cls)) {
    if (fence::mission_eligibility(cl, length, req.desired_duration, cfg.eligibility).eligible)
      eligible.push_back(cl);
  }
  if (eligible.empty())
    fail(Errc::Infeasible, "no available compliance level is eligible for this mission",
         {"NoEligibleCL"});

  const double v_mid = 0.5 * (v_min + v_max);
  const double buffer = std::max(cfg.buffer_fraction * req.desired_duration, cfg.buffer_min);
  const geometry::TimeWindow window{req.time_of_day,
                                    req.time_of_day + req.desired_duration + buffer};

  const std::pair<const char*, lanes::Distribution> dists[] = {
      {"BasicB", lanes::Distribution::basic_b()},
      {"A", lanes::Distribution::a()},
      {"B", lanes::Distribution::b()}};
  const lanes::CrossSectionLayout layouts[] = {
      lanes::CrossSectionLayout::vertical_stack(cfg.stack_spacing, 4),
      lanes::CrossSectionLayout::grid_2x2(cfg.grid_h_spacing, cfg.grid_v_spacing)};

  struct Ranked {
    CorridorOption option;
    bool comfortable;
    int index;
  };
  std::vector<Ranked> found;
  int zone_conflicts = 0, short_capacity = 0, invalid = 0, index = 0;
  for (const auto& [dist_name, dist] : dists) {
    for (const auto& layout : layouts) {
      ++index;
      const auto wanted = used_lanes(dist);
      double reach = 0.0;
      for (const auto& [id, off] : layout.slots()) {
        if (std::find(wanted.begin(), wanted.end(), id) != wanted.end())
          reach = std::max(reach, std::hypot(off.lateral, off.vertical));
      }
      const double radius = reach + cfg.lane_radius + cfg.corridor_margin;
      std::optional<lanes::LanePlan> plan;
      try {
        plan = lanes::plan_lanes(geometry::CorridorTube(route, radius), layout, dist,
                                 cfg.lane_radius);
      } catch (const Error&) {
        ++invalid;
        continue;
      }
      const auto report = lanes::validate_plan(*plan, zones, window);
      if (!report.valid()) {
        const bool zone = std::any_of(report.violations.begin(), report.violations.end(),
                                      [](const auto& v) {
                                        return v.kind == lanes::Violation::Kind::NoFlyConflict;
                                      });
        ++(zone ? zone_conflicts : invalid);
        continue;
      }
      std::optional<ComplianceLevel> chosen;
      double capacity = 0.0;
      for (auto cl : eligible) {
        const auto f = fence::core_fence_dims(v_mid, cl, cfg.uav_length, cfg.uav_span, cfg.fence);
        const double h = fence::min_headway(f, f);
        double cap = 0.0;
        for (const auto& l : plan->lanes()) {
          if (l.role == lanes::LaneRole::Traffic) cap += lanes::throughput_capacity(l, v_mid, h);
        }
        if (cap >= req.expected_throughput) {
          chosen = cl;
          capacity = cap;
          break;
        }
      }
      if (!chosen) {
        ++short_capacity;
        continue;
      }
      CorridorOption o{fmt::format("O{}", index), *plan};
      o.v_min = v_min;
      o.v_max = v_max;
      o.required_cl = *chosen;
      o.window = window;
      o.capacity = capacity;
      o.coupled = lanes::coupled_count(*plan);
      o.volume = plan->corridor().volume();
      o.rationale = fmt::format(
          "{} on {}: capacity {:.0f} veh/h ({:.2f}x demand) with {}, {} coupled pair(s), "
          "volume {:.0f} m^3",
          dist_name, lanes::to_string(layout.kind), capacity,
          capacity / req.expected_throughput, fence::to_string(*chosen), o.coupled, o.volume);
      found.push_back({std::move(o), capacity >= cfg.headroom * req.expected_throughput, index});
    }
  }
  if (found.empty()) {
    std::vector<std::string> reasons;
    if (zone_conflicts == index) reasons.push_back("AllPlansConflictWithZones");
    else {
      if (zone_conflicts > 0) reasons.push_back("ConflictsWithZones");
      if (short_capacity > 0) reasons.push_back("InsufficientCapacity");
      if (invalid > 0) reasons.push_back("InvalidPlan");
    }
    fail(Errc::Infeasible, "no corridor option satisfies the request", reasons);
  }
  std::stable_sort(found.begin(), found.end(), [](const Ranked& a, const Ranked& b) {
    if (a.comfortable != b.comfortable) return a.comfortable;
    if (a.option.coupled != b.option.coupled) return a.option.coupled < b.option.coupled;
    if (a.option.volume != b.option.volume) return a.option.volume < b.option.volume;
    return a.index < b.index;
  });
  std::vector<CorridorOption> out;
  const double n = static_cast<double>(found.size());
  for (std::size_t i = 0; i < found.size(); ++i) {
    found[i].option.score = 1.0 - static_cast<double>(i) / n;
    out.push_back(std::move(found[i].option));
  }
  return out;
}

// ---- commands ----

OperatorCommand command_from(const json& j) {
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string())
    fail(Errc::ValidationFailed, "command needs a type", {"type"});
  const auto type = j.at("type").get<std::string>();
  OperatorCommand c;
  auto need = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_string())
      fail(Errc::ValidationFailed, std::string(key) + " missing", {key});
    return j.at(key).get<std::string>();
  };
  if (type == "SelectOption") {
    c.kind = OperatorCommand::Kind::SelectOption;
    c.option_id = need("option_id");
  } else if (type == "StartMission") {
    c.kind = OperatorCommand::Kind::StartMission;
  } else if (type == "AbortMission") {
    c.kind = OperatorCommand::Kind::AbortMission;
  } else if (type == "CommandLanding") {
    c.kind = OperatorCommand::Kind::CommandLanding;
    c.uav_id = need("uav_id");
  } else if (type == "AcknowledgeWarning") {
    c.kind = OperatorCommand::Kind::AcknowledgeWarning;
    c.event_id = need("event_id");
  } else {
    fail(Errc::ValidationFailed, "unknown command type " + type, {"type"});
  }
  return c;
}

sim::Injection injection_from(const json& j) {
  if (!j.is_object()) fail(Errc::ValidationFailed, "injection must be an object", {"injection"});
  const auto kind = j.value("kind", "");
  sim::Injection inj;
  if (!j.contains("uav_id") || !j.at("uav_id").is_string())
    fail(Errc::ValidationFailed, "uav_id missing", {"uav_id"});
  inj.uav_id = j.at("uav_id").get<std::string>();
  if (kind == "Fault") {
    inj.kind = sim::Injection::Kind::Fault;
  } else if (kind == "Disturbance") {
    inj.kind = sim::Injection::Kind::Disturbance;
    inj.lateral = j.value("lateral", 0.0);
    inj.vertical = j.value("vertical", 0.0);
  } else if (kind == "CommandLanding") {
    inj.kind = sim::Injection::Kind::CommandLanding;
  } else if (kind == "LaneChange") {
    inj.kind = sim::Injection::Kind::LaneChange;
    if (!j.contains("target_lane") || !j.at("target_lane").is_string())
      fail(Errc::ValidationFailed, "target_lane missing", {"target_lane"});
    inj.target_lane = j.at("target_lane").get<std::string>();
  } else {
    fail(Errc::ValidationFailed, "kind must be Fault, Disturbance, CommandLanding or LaneChange",
         {"kind"});
  }
  return inj;
}

ordered_json to_json(const sim::Injection& inj) {
  ordered_json j;
  switch (inj.kind) {
    case sim::Injection::Kind::Fault: j["kind"] = "Fault"; break;
    case sim::Injection::Kind::Disturbance: j["kind"] = "Disturbance"; break;
    case sim::Injection::Kind::CommandLanding: j["kind"] = "CommandLanding"; break;
    case sim::Injection::Kind::LaneChange: j["kind"] = "LaneChange"; break;
  }
  j["uav_id"] = inj.uav_id;
  if (inj.kind == sim::Injection::Kind::Disturbance) {
    j["lateral"] = inj.lateral;
    j["vertical"] = inj.vertical;
  }
  if (inj.kind == sim::Injection::Kind::LaneChange) j["target_lane"] = inj.target_lane;
  return j;
}

namespace {

void apply_injection(sim::World& w, const sim::Injection& inj) {
  switch (inj.kind) {
    case sim::Injection::Kind::Fault: w.inject_fault(inj.uav_id); break;
    case sim::Injection::Kind::Disturbance:
      w.inject_disturbance(inj.uav_id, inj.lateral, inj.vertical);
      break;
    case sim::Injection::Kind::CommandLanding: w.command_landing(inj.uav_id); break;
    case sim::Injection::Kind::LaneChange: w.request_lane_change(inj.uav_id, inj.target_lane); break;
  }
}

}  // namespace

// ---- journal ----

ordered_json to_json(const JournalEntry& e) {
  ordered_json j;
  j["seq"] = e.seq;
  j["type"] = e.type;
  if (e.step) j["step"] = *e.step;
  j["data"] = e.data;
  return j;
}

JournalEntry entry_from(const json& j) {
  JournalEntry e;
  try {
    e.seq = j.at("seq").get<std::uint64_t>();
    e.type = j.at("type").get<std::string>();
    if (j.contains("step")) e.step = j.at("step").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    fail(Errc::Parse, std::string("journal entry: ") + ex.what());
  }
  e.data = ordered_json::parse(j.value("data", json::object()).dump());
  return e;
}

namespace {

JournalEntry entry_from_line(const std::string& line) {
  const auto j = ordered_json::parse(line);
  JournalEntry e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.type = j.at("type").get<std::string>();
  if (j.contains("step")) e.step = j.at("step").get<std::uint64_t>();
  e.data = j.contains("data") ? j.at("data") : ordered_json::object();
  return e;
}

void move_to(ordered_json& record, MissionStatus to) {
  const auto from = mission_status_from(record.at("status").get<std::string>());
  if (!transition_allowed(from, to))
    fail(Errc::IncompatibleStatus, "transition " + to_string(from) + " -> " + to_string(to),
         {to_string(from), to_string(to)});
  record["status"] = to_string(to);
  record["status_history"].push_back(to_string(to));
}

// Parses lines; a final line that is not valid JSON was torn by a crash.
std::vector<JournalEntry> parse_lines(const std::vector<std::string>& lines, bool& torn) {
  std::vector<JournalEntry> out;
  torn = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      out.push_back(entry_from_line(lines[i]));
    } catch (const std::exception& e) {
      if (i + 1 == lines.size()) {
        torn = true;
        break;
      }
      fail(Errc::Parse, fmt::format("journal line {}: {}", i + 1, e.what()));
    }
    if (out.size() > 1 && out.back().seq != out[out.size() - 2].seq + 1)
      fail(Errc::Parse, fmt::format("journal line {}: sequence gap", i + 1));
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

void apply_entry(ordered_json& record, const JournalEntry& e) {
  const auto& d = e.data;
  if (e.type == "Created") {
    if (!record.is_null()) fail(Errc::IncompatibleStatus, "Created on an existing record");
    record = ordered_json::object();
    record["id"] = d.at("id");
    record["status"] = to_string(MissionStatus::Draft);
    record["status_history"] = ordered_json::array({to_string(MissionStatus::Draft)});
    record["request"] = d.at("request");
    record["environment"] = nullptr;
    record["zones"] = ordered_json::array();
    record["options"] = ordered_json::array();
    record["selected_option"] = nullptr;
    record["negotiation"] = ordered_json::array();
    record["last_failure"] = nullptr;
    record["allocation"] = nullptr;
    record["plan"] = nullptr;
    record["replanned"] = false;
    record["sim"] = nullptr;
    record["warnings"] = ordered_json::object();
    record["commands"] = ordered_json::array();
    record["injections"] = ordered_json::array();
    record["report"] = nullptr;
    record["sealed"] = false;
    record["last_seq"] = e.seq;
    return;
  }
  if (record.is_null()) fail(Errc::Parse, "journal does not start with Created");
  if (record.at("sealed").get<bool>())
    fail(Errc::IncompatibleStatus, "journal is sealed", {"Sealed"});
  if (e.type == "OptionsGenerated") {
    move_to(record, MissionStatus::OptionsReady);
    record["environment"] = d.at("environment");
    record["zones"] = d.at("zones");
    record["options"] = d.at("options");
  } else if (e.type == "OptionSelected") {
    record["selected_option"] = d.at("option_id");
  } else if (e.type == "NegotiationStarted") {
    move_to(record, MissionStatus::Negotiating);
    record["selected_option"] = d.at("option_id");
    record["negotiation"] = ordered_json::array();
    record["last_failure"] = nullptr;
  } else if (e.type == "NegotiationRound") {
    record["negotiation"].push_back(d);
  } else if (e.type == "NegotiationFailed") {
    move_to(record, MissionStatus::OptionsReady);
    record["last_failure"] = d.at("reasons");
  } else if (e.type == "Allocated") {
    move_to(record, MissionStatus::Allocated);
    record["allocation"] = d.at("allocation");
    record["plan"] = d.at("plan");
    record["replanned"] = d.at("replanned");
  } else if (e.type == "Activated") {
    move_to(record, MissionStatus::Active);
    record["allocation"]["state"] = "Active";
    ordered_json sim;
    sim["config"] = d.at("config");
    sim["activated_at"] = d.at("activated_at");
    sim["events"] = 0;
    sim["telemetry_frames"] = 0;
    sim["step"] = 0;
    record["sim"] = std::move(sim);
  } else if (e.type == "SimEvent" || e.type == "Telemetry") {
    auto& sim = record.at("sim");
    if (sim.is_null()) fail(Errc::IncompatibleStatus, e.type + " before activation");
    if (e.type == "SimEvent") {
      sim["events"] = sim.at("events").get<std::uint64_t>() + 1;
      if (is_warning(d.at("event"))) {
        ordered_json w;
        w["type"] = d.at("event").at("type");
        w["detail"] = d.at("event").at("detail");
        w["acknowledged"] = false;
        record["warnings"][d.at("event_id").get<std::string>()] = std::move(w);
      }
    } else {
      sim["telemetry_frames"] = sim.at("telemetry_frames").get<std::uint64_t>() + 1;
    }
    if (e.step) sim["step"] = *e.step;
  } else if (e.type == "Injected") {
    if (record.at("sim").is_null()) fail(Errc::IncompatibleStatus, "injection before activation");
    record["injections"].push_back(d);
  } else if (e.type == "CommandAccepted") {
    record["commands"].push_back(d.at("command"));
  } else if (e.type == "WarningAcknowledged") {
    const auto id = d.at("event_id").get<std::string>();
    auto& w = record["warnings"];
    if (!w.contains(id)) fail(Errc::UnknownEvent, "unknown warning " + id, {id});
    if (w[id].at("acknowledged").get<bool>())
      fail(Errc::IncompatibleStatus, "warning " + id + " already acknowledged", {id});
    w[id]["acknowledged"] = true;
  } else if (e.type == "Completed") {
    move_to(record, MissionStatus::Completed);
    record["allocation"]["state"] = "Completed";
  } else if (e.type == "Aborted") {
    move_to(record, MissionStatus::Aborted);
  } else if (e.type == "Released") {
    move_to(record, MissionStatus::Released);
    if (!record["allocation"].is_null()) record["allocation"]["state"] = "Released";
    record["report"] = d.at("report");
  } else if (e.type == "Sealed") {
    if (record.at("status") != to_string(MissionStatus::Released))
      fail(Errc::IncompatibleStatus, "seal before release");
    record["sealed"] = true;
  } else {
    fail(Errc::Parse, "unknown journal entry type " + e.type);
  }
  record["last_seq"] = e.seq;
}

ordered_json replay_journal(const std::vector<std::string>& lines) {
  bool torn = false;
  ordered_json record;
  for (const auto& e : parse_lines(lines, torn)) apply_entry(record, e);
  if (record.is_null()) fail(Errc::Parse, "empty journal");
  return record;
}

ordered_json replay_journal_file(const std::string& path) { return replay_journal(read_lines(path)); }

// ---- service ----

struct Service::Mission {
  std::string id;
  mutable std::mutex mu;
  mutable std::condition_variable cv;
  ordered_json record;
  std::vector<JournalEntry> entries;
  std::uint64_t next_seq = 1;
  std::uint64_t suppress_until = 0;  // regenerated entries already on disk
  std::unique_ptr<sim::World> world;
  std::vector<sim::SimEvent> pending;
  std::uint64_t sim_events = 0;
  std::unique_ptr<utm::UtmClient> utm;
  std::ofstream journal;

  MissionStatus status() const { return mission_status_from(record.at("status")); }
};

Service::Service(ServiceConfig cfg, utm::Transport& transport, Clock clock)
    : cfg_(std::move(cfg)),
      locked_(std::make_unique<LockedTransport>(transport)),
      clock_(clock ? std::move(clock) : Clock(system_clock_of_day)) {
  std::random_device rd;
  nonce_ = fmt::format("{:08x}", rd());
  if (!cfg_.data_dir.empty()) {
    std::error_code ec;
    fs::create_directories(cfg_.data_dir, ec);
    if (ec) fail(Errc::Io, "cannot create " + cfg_.data_dir + ": " + ec.message());
    recover();
  }
}

Service::~Service() { stop_auto_run(); }

std::string Service::journal_path(const std::string& id) const {
  return (fs::path(cfg_.data_dir) / (id + ".journal.jsonl")).string();
}

std::string Service::snapshot_path(const std::string& id) const {
  return (fs::path(cfg_.data_dir) / (id + ".snapshot.json")).string();
}

std::shared_ptr<Service::Mission> Service::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = missions_.find(id);
  if (it == missions_.end()) fail(Errc::UnknownMission, "unknown mission " + id, {id});
  return it->second;
}

void Service::append(Mission& m, std::string type, ordered_json data) {
  JournalEntry e;
  e.seq = m.next_seq++;
  e.type = std::move(type);
  if (m.world) e.step = m.world->step_index();
  e.data = std::move(data);
  if (e.seq <= m.suppress_until) return;
  try {
    apply_entry(m.record, e);
  } catch (...) {
    --m.next_seq;
    throw;
  }
  if (m.journal.is_open()) {
    m.journal << to_json(e).dump() << '\n';
    m.journal.flush();
    if (!m.journal) fail(Errc::Io, "journal write failed for " + m.id);
  }
  m.entries.push_back(std::move(e));
  m.cv.notify_all();
}

void Service::write_snapshot(Mission& m) {
  if (cfg_.data_dir.empty() || !m.world) return;
  ordered_json j;
  j["seq"] = m.next_seq - 1;
  j["step"] = m.world->step_index();
  j["sim_events"] = m.sim_events;
  j["world"] = m.world->snapshot();
  io::write_file(snapshot_path(m.id), j.dump());
}

utm::UtmClient& Service::client(Mission& m) {
  if (!m.utm) m.utm = std::make_unique<utm::UtmClient>(*locked_, m.id + "/" + nonce_);
  return *m.utm;
}

void Service::build_world(Mission& m, const sim::SimConfig& cfg) {
  auto plan = io::lane_plan_from(io::plain(m.record.at("plan")), "plan");
  auto zones = io::zones_from(io::plain(m.record.at("zones")), "zones");
  m.world = std::make_unique<sim::World>(std::move(plan), cfg, std::move(zones));
  m.world->set_event_sink([&m](const sim::SimEvent& e) { m.pending.push_back(e); });
}

void Service::journal_sim_output(Mission& m) {
  auto events = std::move(m.pending);
  m.pending.clear();
  for (const auto& e : events) {
    ordered_json d;
    d["event_id"] = fmt::format("E{}", ++m.sim_events);
    d["event"] = io::to_json(e);
    append(m, "SimEvent", std::move(d));
  }
  const auto step = m.world->step_index();
  if (step % static_cast<std::uint64_t>(cfg_.telemetry_every) == 0) {
    ordered_json d;
    d["t"] = m.world->time();
    d["uavs"] = ordered_json::array();
    for (const auto& u : m.world->uavs()) {
      ordered_json r;
      r["uav_id"] = u.id;
      r["lane"] = u.lane_id;
      r["s"] = m.world->lane_arc(u);
      r["lateral"] = u.lateral;
      r["vertical"] = u.vertical;
      r["speed"] = u.speed;
      r["mode"] = sim::to_string(u.mode);
      r["health"] = sim::to_string(u.health);
      r["cl"] = fence::to_string(u.cl);
      r["position"] = io::to_json(m.world->world_position(u));
      d["uavs"].push_back(std::move(r));
    }
    append(m, "Telemetry", std::move(d));
  }
}

void Service::step_locked(Mission& m, int steps) {
  if (m.status() != MissionStatus::Active || !m.world)
    incompatible("stepping", m.status());
  for (int i = 0; i < steps; ++i) {
    if (m.world->all_done()) break;
    m.world->step();
    journal_sim_output(m);
    if (m.world->step_index() % static_cast<std::uint64_t>(cfg_.snapshot_every) == 0)
      write_snapshot(m);
  }
}

std::string Service::ingest_mission(const MissionRequest& req) {
  // Round-trip through the JSON form so direct callers get the same checks.
  const auto canonical = to_json(req);
  request_from(io::plain(canonical), std::nullopt);
  auto m = std::make_shared<Mission>();
  {
    std::lock_guard lock(mu_);
    m->id = fmt::format("M{:04d}", ++id_counter_);
    missions_[m->id] = m;
  }
  std::lock_guard lock(m->mu);
  if (!cfg_.data_dir.empty()) {
    m->journal.open(journal_path(m->id), std::ios::binary | std::ios::app);
    if (!m->journal) fail(Errc::Io, "cannot open journal for " + m->id);
  }
  ordered_json d;
  d["id"] = m->id;
  d["request"] = canonical;
  append(*m, "Created", std::move(d));
  return m->id;
}

std::vector<CorridorOption> Service::generate_options(
    const std::string& mission_id, const Environment& env,
    const std::vector<geometry::NoFlyZone>& zones) {
  auto m = get(mission_id);
  std::lock_guard lock(m->mu);
  if (m->status() != MissionStatus::Draft) incompatible("generate_options", m->status());
  auto all = cfg_.zones;
  all.insert(all.end(), zones.begin(), zones.end());
  const auto req = request_from(io::plain(m->record.at("request")), std::nullopt);
  auto options = gcs::generate_options(req, env, all, cfg_);
  ordered_json d;
  d["environment"] = {{"wind", env.wind}};
  d["zones"] = ordered_json::array();
  for (const auto& z : all) d["zones"].push_back(io::to_json(z));
  d["options"] = ordered_json::array();
  for (const auto& o : options) d["options"].push_back(to_json(o));
  append(*m, "OptionsGenerated", std::move(d));
  return options;
}

utm::AllocationRecord Service::select_and_negotiate(const std::string& mission_id,
                                                    const std::string& option_id) {
  auto m = get(mission_id);
  std::lock_guard lock(m->mu);
  if (m->status() != MissionStatus::OptionsReady) incompatible("negotiation", m->status());
  std::string id = option_id;
  if (id.empty()) {
    if (m->record.at("selected_option").is_null())
      fail(Errc::UnknownOption, "no option selected");
    id = m->record.at("selected_option").get<std::string>();
  }
  std::optional<CorridorOption> option;
  for (const auto& o : m->record.at("options")) {
    if (o.at("id") == id) option = option_from(io::plain(o));
  }
  if (!option) fail(Errc::UnknownOption, "unknown option " + id, {id});
  append(*m, "NegotiationStarted", {{"option_id", id}});

  const auto req = request_from(io::plain(m->record.at("request")), std::nullopt);
  const utm::AirspaceVolume proposed{option->plan.corridor(), option->window};
  auto failed = [&](std::vector<std::string> reasons, const std::string& msg) {
    append(*m, "NegotiationFailed", {{"reasons", reasons}});
    fail(Errc::NegotiationFailed, msg, reasons);
  };

  utm::NegotiationResult result;
  try {
    result = utm::negotiate(client(*m), proposed, cfg_.adjust, cfg_.max_rounds,
                            req.utility == Utility::Emergency);
  } catch (const Error& e) {
    append(*m, "NegotiationFailed",
           {{"reasons", ordered_json::array({std::string(to_string(e.code()))})}});
    throw;
  }
  for (const auto& r : result.history) append(*m, "NegotiationRound", round_json(r));
  if (!result.approved()) {
    std::vector<std::string> reasons{"RoundsExhausted"};
    if (!result.history.empty())
      for (const auto& c : result.history.back().conflicts) reasons.push_back(c);
    failed(reasons, fmt::format("negotiation failed after {} round(s)", result.history.size()));
  }

  // Re-plan inside the volume actually granted.
  const auto& alloc = *result.record;
  std::optional<lanes::LanePlan> plan;
  bool replanned = false;
  if (same_tube(alloc.volume, proposed)) {
    plan = option->plan;
  } else {
    replanned = true;
    std::vector<std::string> problems;
    try {
      plan = lanes::plan_lanes(alloc.volume.tube, option->plan.layout(),
                               option->plan.distribution(), cfg_.lane_radius);
      const auto zones = io::zones_from(io::plain(m->record.at("zones")), "zones");
      const auto report = lanes::validate_plan(*plan, zones, alloc.volume.window);
      for (const auto& v : report.violations) problems.push_back("ReplanViolation:" + v.lane);
    } catch (const Error& e) {
      problems.push_back(std::string(to_string(e.code())));
    }
    if (!problems.empty()) {
      try {
        utm::release(client(*m), alloc.allocation_id);
      } catch (const Error&) {
      }
      failed(problems, "allocated volume cannot host the lane plan");
    }
  }
  ordered_json d;
  d["allocation"] = utm::to_json(alloc);
  d["plan"] = io::to_json(*plan);
  d["replanned"] = replanned;
  append(*m, "Allocated", std::move(d));
  return alloc;
}

sim::SimConfig Service::default_sim_config(const ordered_json& record) const {
  const auto req = request_from(io::plain(record.at("request")), std::nullopt);
  const auto plan = io::lane_plan_from(io::plain(record.at("plan")), "plan");
  std::optional<CorridorOption> option;
  for (const auto& o : record.at("options")) {
    if (o.at("id") == record.at("selected_option")) option = option_from(io::plain(o));
  }
  if (!option) fail(Errc::UnknownOption, "selected option missing from record");
  sim::SimConfig c;
  c.dt = cfg_.sim_dt;
  c.seed = std::stoull(record.at("id").get<std::string>().substr(1));
  c.duration = req.desired_duration;
  c.v_max = cfg_.v_max;
  c.headwind = std::abs(record.at("environment").value("wind", 0.0));
  c.fence = cfg_.fence;
  c.eligibility = cfg_.eligibility;
  c.limits = cfg_.limits;
  c.record_telemetry = false;
  std::vector<std::string> traffic;
  for (const auto& l : plan.lanes()) {
    if (l.role == lanes::LaneRole::Traffic) traffic.push_back(l.id);
  }
  const double rate = req.expected_throughput / static_cast<double>(traffic.size());
  const double v_mid = 0.5 * (option->v_min + option->v_max);
  for (const auto& lane : traffic) {
    sim::SpawnStream s;
    s.lane_id = lane;
    s.rate_per_hour = rate;
    s.mission = {option->required_cl, v_mid, cfg_.uav_length, cfg_.uav_span};
    s.max_count = std::max(1, static_cast<int>(std::lround(rate * req.desired_duration / 3600.0)));
    c.streams.push_back(std::move(s));
  }
  return c;
}

void Service::activate_locked(Mission& m, const std::optional<sim::SimConfig>& sim_cfg) {
  const auto st = m.status();
  if (st == MissionStatus::Draft || st == MissionStatus::OptionsReady ||
      st == MissionStatus::Negotiating)
    fail(Errc::NotAllocated, "mission " + m.id + " has no allocation", {to_string(st)});
  if (st != MissionStatus::Allocated) incompatible("activation", st);
  const double now = clock_();
  const auto window = io::window_from(io::plain(m.record.at("allocation").at("volume").at("window")),
                                      "allocation.volume.window");
  if (now < window.t_start || now > window.t_end)
    fail(Errc::OutsideWindow,
         fmt::format("now {:.0f} s is outside [{:.0f}, {:.0f}]", now, window.t_start,
                     window.t_end),
         {fmt::format("{}", now)});
  sim::SimConfig cfg = sim_cfg ? *sim_cfg : default_sim_config(m.record);
  cfg.fence = cfg_.fence;
  cfg.eligibility = cfg_.eligibility;
  cfg.limits = cfg_.limits;
  cfg.validate();
  const auto alloc_id = m.record.at("allocation").at("allocation_id").get<std::string>();
  utm::activate(client(m), alloc_id);
  try {
    build_world(m, cfg);
  } catch (...) {
    m.world.reset();
    throw;
  }
  ordered_json d;
  d["config"] = io::to_json(cfg);
  d["activated_at"] = now;
  append(m, "Activated", std::move(d));
  write_snapshot(m);
}

void Service::activate_and_run(const std::string& mission_id,
                               const std::optional<sim::SimConfig>& sim_cfg) {
  auto m = get(mission_id);
  std::lock_guard lock(m->mu);
  activate_locked(*m, sim_cfg);
}

void Service::finish_release(Mission& m) {
  const auto& alloc = m.record.at("allocation");
  std::string alloc_id;
  if (!alloc.is_null()) {
    alloc_id = alloc.at("allocation_id").get<std::string>();
    try {
      utm::release(client(m), alloc_id);
    } catch (const Error& e) {
      // Already gone at the authority (e.g. released before a crash).
      if (e.code() != Errc::UnknownAllocation) throw;
    }
  }
  ordered_json report = nullptr;
  if (m.world) {
    report = ordered_json::parse(sim::format_metrics_json(m.world->metrics()));
    if (!cfg_.data_dir.empty()) {
      std::string lines;
      for (const auto& e : m.world->events()) lines += sim::format_event_line(e) + "\n";
      io::write_file((fs::path(cfg_.data_dir) / (m.id + ".events.jsonl")).string(), lines);
      io::write_file((fs::path(cfg_.data_dir) / (m.id + ".metrics.json")).string(),
                     sim::format_metrics_json(m.world->metrics()));
    }
  }
  ordered_json d;
  d["allocation_id"] = alloc_id.empty() ? ordered_json(nullptr) : ordered_json(alloc_id);
  d["report"] = std::move(report);
  append(m, "Released", std::move(d));
  append(m, "Sealed", ordered_json::object());
  m.world.reset();
  if (!cfg_.data_dir.empty()) {
    std::error_code ec;
    fs::remove(snapshot_path(m.id), ec);
  }
}

void Service::handle_command(const std::string& mission_id, const OperatorCommand& cmd) {
  auto m = get(mission_id);
  std::lock_guard lock(m->mu);
  const auto st = m->status();
  switch (cmd.kind) {
    case OperatorCommand::Kind::SelectOption: {
      if (st != MissionStatus::OptionsReady) incompatible("SelectOption", st);
      bool known = false;
      for (const auto& o : m->record.at("options")) known = known || o.at("id") == cmd.option_id;
      if (!known) fail(Errc::UnknownOption, "unknown option " + cmd.option_id, {cmd.option_id});
      append(*m, "CommandAccepted", {{"command", command_json(cmd)}});
      append(*m, "OptionSelected", {{"option_id", cmd.option_id}});
      return;
    }
    case OperatorCommand::Kind::StartMission:
      activate_locked(*m, std::nullopt);
      append(*m, "CommandAccepted", {{"command", command_json(cmd)}});
      return;
    case OperatorCommand::Kind::AbortMission: {
      if (st != MissionStatus::Allocated && st != MissionStatus::Active)
        incompatible("AbortMission", st);
      append(*m, "CommandAccepted", {{"command", command_json(cmd)}});
      append(*m, "Aborted", ordered_json::object());
      if (m->world) {
        m->world->land_all();
        // Drain: every UAV lands; bounded by the time to stop from top speed.
        const int cap = static_cast<int>(std::ceil(
            (cfg_.limits.max_speed / cfg_.limits.max_accel + 10.0) / m->world->config().dt));
        for (int i = 0; i < cap && !m->world->all_done(); ++i) {
          m->world->step();
          journal_sim_output(*m);
        }
      }
      finish_release(*m);
      return;
    }
    case OperatorCommand::Kind::CommandLanding: {
      if (st != MissionStatus::Active || !m->world) incompatible("CommandLanding", st);
      const auto* u = m->world->find(cmd.uav_id);
      if (!u || u->mode == sim::Mode::Done || u->mode == sim::Mode::Aborted)
        fail(Errc::UnknownUAV, "no active UAV " + cmd.uav_id, {cmd.uav_id});
      m->world->command_landing(cmd.uav_id);
      append(*m, "CommandAccepted", {{"command", command_json(cmd)}});
      write_snapshot(*m);
      return;
    }
    case OperatorCommand::Kind::AcknowledgeWarning: {
      const auto& w = m->record.at("warnings");
      if (!w.contains(cmd.event_id))
        fail(Errc::UnknownEvent, "unknown warning " + cmd.event_id, {cmd.event_id});
      if (w.at(cmd.event_id).at("acknowledged").get<bool>())
        fail(Errc::IncompatibleStatus, "warning " + cmd.event_id + " already acknowledged",
             {cmd.event_id});
      if (m->record.at("sealed").get<bool>()) incompatible("AcknowledgeWarning", st);
      append(*m, "CommandAccepted", {{"command", command_json(cmd)}});
      append(*m, "WarningAcknowledged", {{"event_id", cmd.event_id}});
      return;
    }
  }
}

void Service::inject(const std::string& mission_id, const sim::Injection& inj) {
  auto m = get(mission_id);
  std::lock_guard lock(m->mu);
  if (m->status() != MissionStatus::Active || !m->world) incompatible("injection", m->status());
  apply_injection(*m->world, inj);
  append(*m, "Injected", to_json(inj));
  write_snapshot(*m);
}

void Service::step(const std::string& mission_id, int steps) {
  auto m = get(mission_id);
  std::lock_guard lock(m->mu);
  step_locked(*m, steps);
}

ordered_json Service::complete_and_release(const std::string& mission_id) {
  auto m = get(mission_id);
  std::lock_guard lock(m->mu);
  const auto st = m->status();
  if (st == MissionStatus::Aborted) {
    finish_release(*m);
    return m->record;
  }
  if (st != MissionStatus::Active || !m->world) incompatible("completion", st);
  if (!m->world->all_done()) {
    std::vector<std::string> active;
    for (const auto& u : m->world->uavs()) active.push_back(u.id);
    fail(Errc::UAVsStillActive,
         fmt::format("{} UAV(s) still active, spawning {}", active.size(),
                     m->world->streams_exhausted() ? "finished" : "pending"),
         active);
  }
  const auto alloc_id = m->record.at("allocation").at("allocation_id").get<std::string>();
  utm::complete(client(*m), alloc_id);
  append(*m, "Completed", ordered_json::object());
  finish_release(*m);
  return m->record;
}

ordered_json Service::record(const std::string& mission_id) const {
  auto m = get(mission_id);
  std::lock_guard lock(m->mu);
  return m->record;
}

std::vector<std::string> Service::mission_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, m] : missions_) ids.push_back(id);
  return ids;
}

MissionStatus Service::status(const std::string& mission_id) const {
  auto m = get(mission_id);
  std::lock_guard lock(m->mu);
  return m->status();
}

std::vector<JournalEntry> Service::entries(const std::string& mission_id, std::uint64_t since,
                                           std::size_t limit) const {
  auto m = get(mission_id);
  std::lock_guard lock(m->mu);
  std::vector<JournalEntry> out;
  auto it = std::upper_bound(m->entries.begin(), m->entries.end(), since,
                             [](std::uint64_t s, const JournalEntry& e) { return s < e.seq; });
  for (; it != m->entries.end() && out.size() < limit; ++it) out.push_back(*it);
  return out;
}

bool Service::wait_for_entries(const std::string& mission_id, std::uint64_t since,
                               int timeout_ms) const {
  auto m = get(mission_id);
  std::unique_lock lock(m->mu);
  return m->cv.wait_for(lock, std::chrono::milliseconds(timeout_ms), [&] {
    return !m->entries.empty() && m->entries.back().seq > since;
  });
}

std::optional<sim::SimMetrics> Service::metrics(const std::string& mission_id) const {
  auto m = get(mission_id);
  std::lock_guard lock(m->mu);
  if (!m->world) return std::nullopt;
  return m->world->metrics();
}

std::vector<sim::UAVState> Service::uavs(const std::string& mission_id) const {
  auto m = get(mission_id);
  std::lock_guard lock(m->mu);
  if (!m->world) return {};
  return m->world->uavs();
}

void Service::start_auto_run(double real_time_factor) {
  if (!(real_time_factor > 0)) fail(Errc::ValidationFailed, "real-time factor must be > 0");
  stop_auto_run();
  {
    std::lock_guard lock(run_mu_);
    running_ = true;
  }
  runner_ = std::thread([this, real_time_factor] {
    const auto period = std::chrono::duration<double>(cfg_.sim_dt / real_time_factor);
    auto next = std::chrono::steady_clock::now();
    std::unique_lock lock(run_mu_);
    while (running_) {
      next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
      if (run_cv_.wait_until(lock, next, [this] { return !running_; })) break;
      lock.unlock();
      std::vector<std::shared_ptr<Mission>> all;
      {
        std::lock_guard g(mu_);
        for (const auto& [id, m] : missions_) all.push_back(m);
      }
      for (const auto& m : all) {
        std::lock_guard g(m->mu);
        if (m->world && m->status() == MissionStatus::Active && !m->world->all_done()) {
          try {
            step_locked(*m, 1);
          } catch (const Error&) {
          }
        }
      }
      lock.lock();
    }
  });
}

void Service::stop_auto_run() {
  {
    std::lock_guard lock(run_mu_);
    running_ = false;
  }
  run_cv_.notify_all();
  if (runner_.joinable()) runner_.join();
}

// ---- recovery ----

void Service::recover() {
  std::vector<fs::path> journals;
  for (const auto& entry : fs::directory_iterator(cfg_.data_dir)) {
    const auto name = entry.path().filename().string();
    if (name.size() > 14 && name.ends_with(".journal.jsonl")) journals.push_back(entry.path());
  }
  std::sort(journals.begin(), journals.end());
  for (const auto& path : journals) {
    const auto name = path.filename().string();
    const auto id = name.substr(0, name.size() - std::string(".journal.jsonl").size());
    recover_mission(id, read_lines(path.string()));
  }
}

void Service::recover_mission(const std::string& id, const std::vector<std::string>& lines) {
  bool torn = false;
  auto parsed = parse_lines(lines, torn);
  if (parsed.empty()) return;
  auto m = std::make_shared<Mission>();
  m->id = id;
  for (const auto& e : parsed) apply_entry(m->record, e);
  m->entries = parsed;
  m->next_seq = parsed.back().seq + 1;
  if (torn) {
    std::string text;
    for (const auto& e : parsed) text += to_json(e).dump() + "\n";
    io::write_file(journal_path(id), text);
  }
  m->journal.open(journal_path(id), std::ios::binary | std::ios::app);
  {
    std::lock_guard lock(mu_);
    missions_[id] = m;
    if (id.size() > 1 && id[0] == 'M')
      id_counter_ = std::max<std::uint64_t>(id_counter_, std::stoull(id.substr(1)));
  }
  std::lock_guard lock(m->mu);
  const auto st = m->status();
  if (st == MissionStatus::Negotiating) {
    // The outcome was never journaled; the authority may hold an approval we
    // cannot identify, so the mission goes back to option selection.
    append(*m, "NegotiationFailed",
           {{"reasons", ordered_json::array({"InterruptedByRestart"})}});
    return;
  }
  if (st == MissionStatus::Aborted) {
    finish_release(*m);
    return;
  }
  if (st != MissionStatus::Active) return;

  const auto cfg = io::sim_config_from(io::plain(m->record.at("sim").at("config")));
  build_world(*m, cfg);
  const std::uint64_t last = m->next_seq - 1;
  std::uint64_t base_seq = 0;
  for (const auto& e : parsed) {
    if (e.type == "Activated") base_seq = e.seq;
  }
  if (fs::exists(snapshot_path(id))) {
    const auto snap = io::read_file(snapshot_path(id));
    m->world->restore(snap.at("world").get<std::string>());
    base_seq = snap.at("seq").get<std::uint64_t>();
    m->sim_events = snap.at("sim_events").get<std::uint64_t>();
  }
  // Re-run from the snapshot: regenerated entries up to `last` are already on
  // disk and are skipped; journaled commands are re-applied at their step.
  m->next_seq = base_seq + 1;
  m->suppress_until = last;
  std::size_t idx = 0;
  while (idx < parsed.size() && parsed[idx].seq <= base_seq) ++idx;
  std::uint64_t max_step = 0;
  for (const auto& e : parsed) max_step = std::max<std::uint64_t>(max_step, e.step.value_or(0));
  while (true) {
    while (idx < parsed.size() && parsed[idx].seq < m->next_seq) ++idx;
    while (idx < parsed.size() && !is_sim_entry(parsed[idx].type) &&
           parsed[idx].step.value_or(0) == m->world->step_index()) {
      const auto& e = parsed[idx];
      if (e.type == "CommandAccepted" && e.data.at("command").at("type") == "CommandLanding")
        m->world->command_landing(e.data.at("command").at("uav_id").get<std::string>());
      if (e.type == "Injected") apply_injection(*m->world, injection_from(io::plain(e.data)));
      m->next_seq = e.seq + 1;
      ++idx;
    }
    if (m->next_seq > last) break;
    if (m->world->step_index() > max_step)
      fail(Errc::Parse, "journal of " + id + " does not match its simulation");
    m->world->step();
    journal_sim_output(*m);
  }
  m->suppress_until = 0;
  write_snapshot(*m);
}

}  // namespace corridrone::gcs
