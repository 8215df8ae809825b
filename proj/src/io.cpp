#include "corridrone/io.hpp"

#include <fstream>
#include <sstream>

#include "corridrone/error.hpp"

namespace corridrone::io {

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  fail(Errc::ValidationFailed, field + ": " + why, {field});
}

std::string join(const std::string& field, const std::string& key) {
  return field.empty() ? key : field + "." + key;
}

template <typename T>
T value(const json& j, const std::string& key, const std::string& field, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    bad(join(field, key), "wrong type");
  }
}

template <typename T>
T required(const json& j, const std::string& key, const std::string& field) {
  if (!j.is_object() || !j.contains(key)) bad(join(field, key), "missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    bad(join(field, key), "wrong type");
  }
}

const json& section(const json& j, const std::string& key, const std::string& field) {
  if (!j.is_object() || !j.contains(key)) bad(join(field, key), "missing");
  return j.at(key);
}

lanes::FlowDirection direction_from(const json& j, const std::string& field) {
  if (j == "Inflow") return lanes::FlowDirection::Inflow;
  if (j == "Outflow") return lanes::FlowDirection::Outflow;
  bad(field, "expected Inflow or Outflow");
}

lanes::LaneRole role_from(const json& j, const std::string& field) {
  if (j == "Traffic") return lanes::LaneRole::Traffic;
  if (j == "Service") return lanes::LaneRole::Service;
  if (j == "Emergency") return lanes::LaneRole::Emergency;
  bad(field, "expected Traffic, Service or Emergency");
}

// Converts library precondition failures into field-scoped validation errors.
template <typename F>
auto guarded(const std::string& field, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == Errc::PreconditionViolated) bad(field, e.what());
    throw;
  }
}

}  // namespace

ordered_json to_json(const geometry::Point3& p) {
  return ordered_json::array({p.east, p.north, p.up});
}

ordered_json to_json(const geometry::TimeWindow& w) {
  ordered_json j;
  j["t_start"] = w.t_start;
  j["t_end"] = w.t_end;
  return j;
}

ordered_json to_json(const geometry::NoFlyZone& z) {
  ordered_json j;
  j["id"] = z.id;
  j["footprint"] = ordered_json::array();
  for (const auto& p : z.footprint) j["footprint"].push_back(ordered_json::array({p.east, p.north}));
  j["alt_min"] = z.alt_min;
  j["alt_max"] = z.alt_max;
  j["active_window"] = to_json(z.active_window);
  return j;
}

ordered_json to_json(const geometry::CorridorTube& t) {
  ordered_json j;
  j["waypoints"] = ordered_json::array();
  for (const auto& p : t.centerline().waypoints()) j["waypoints"].push_back(to_json(p));
  j["radius"] = t.outer_radius();
  return j;
}

ordered_json to_json(const lanes::LanePlan& plan) {
  ordered_json j;
  j["corridor"] = to_json(plan.corridor());
  const auto& layout = plan.layout();
  ordered_json lj;
  lj["kind"] = lanes::to_string(layout.kind);
  switch (layout.kind) {
    case lanes::CrossSectionLayout::Kind::VerticalStack:
      lj["spacing"] = layout.spacing;
      lj["count"] = layout.count;
      break;
    case lanes::CrossSectionLayout::Kind::Grid2x2:
      lj["h_spacing"] = layout.h_spacing;
      lj["v_spacing"] = layout.v_spacing;
      break;
    case lanes::CrossSectionLayout::Kind::Custom:
      lj["offsets"] = ordered_json::array();
      for (const auto& o : layout.offsets)
        lj["offsets"].push_back(ordered_json::array({o.lateral, o.vertical}));
      break;
  }
  j["layout"] = std::move(lj);
  const auto& dist = plan.distribution();
  if (dist.kind == lanes::Distribution::Kind::Custom) {
    ordered_json dj = ordered_json::object();
    for (const auto& [id, d] : dist.custom) dj[id] = lanes::to_string(d);
    j["distribution"] = std::move(dj);
  } else {
    j["distribution"] = lanes::to_string(dist.kind);
  }
  j["lanes"] = ordered_json::array();
  for (const auto& l : plan.lanes()) {
    ordered_json lj;
    lj["id"] = l.id;
    lj["lateral"] = l.offset.lateral;
    lj["vertical"] = l.offset.vertical;
    lj["radius"] = l.radius;
    lj["direction"] = lanes::to_string(l.direction);
    lj["role"] = lanes::to_string(l.role);
    j["lanes"].push_back(std::move(lj));
  }
  return j;
}

ordered_json to_json(const fence::FenceConfig& f) {
  ordered_json j;
  j["tau_f"] = f.tau_f;
  j["tau_r"] = f.tau_r;
  j["d0"] = f.d0;
  j["k"] = {{"CL1", f.multiplier(fence::ComplianceLevel::CL1)},
            {"CL2", f.multiplier(fence::ComplianceLevel::CL2)},
            {"CL3", f.multiplier(fence::ComplianceLevel::CL3)}};
  j["cross_margin"] = f.cross_margin;
  return j;
}

ordered_json to_json(const fence::EligibilityPolicy& p) {
  ordered_json j;
  j["cl1_max_length"] = p.cl1_max_length;
  j["cl1_max_duration"] = p.cl1_max_duration;
  j["cl2_max_length"] = p.cl2_max_length;
  j["cl2_max_duration"] = p.cl2_max_duration;
  return j;
}

ordered_json to_json(const lanes::KinematicLimits& l) {
  ordered_json j;
  j["max_cross_speed"] = l.max_cross_speed;
  j["max_speed"] = l.max_speed;
  j["max_accel"] = l.max_accel;
  return j;
}

ordered_json to_json(const sim::Mission& m) {
  ordered_json j;
  j["cl"] = fence::to_string(m.cl);
  j["v_target"] = m.v_target;
  j["uav_length"] = m.uav_length;
  j["uav_span"] = m.uav_span;
  return j;
}

ordered_json to_json(const sim::SimConfig& c) {
  ordered_json s;
  s["dt"] = c.dt;
  s["seed"] = c.seed;
  s["duration"] = c.duration;
  s["v_min"] = c.v_min;
  s["v_max"] = c.v_max;
  s["stagger_min"] = c.stagger_min ? ordered_json(*c.stagger_min) : ordered_json();
  s["headwind"] = c.headwind;
  s["degraded_speed_factor"] = c.degraded_speed_factor;
  s["proportional_band"] = c.proportional_band;
  s["record_telemetry"] = c.record_telemetry;
  s["telemetry_stride"] = c.telemetry_stride;
  s["metrics_warmup"] = c.metrics_warmup;
  s["streams"] = ordered_json::array();
  for (const auto& st : c.streams) {
    ordered_json j;
    j["lane"] = st.lane_id;
    j["rate_per_hour"] = st.rate_per_hour;
    j["mission"] = to_json(st.mission);
    j["max_count"] = st.max_count;
    j["start_time"] = st.start_time;
    s["streams"].push_back(std::move(j));
  }
  s["scheduled"] = ordered_json::array();
  for (const auto& sp : c.scheduled) {
    ordered_json j;
    j["t"] = sp.t;
    j["lane"] = sp.lane_id;
    j["mission"] = to_json(sp.mission);
    s["scheduled"].push_back(std::move(j));
  }
  ordered_json root;
  root["fence"] = to_json(c.fence);
  root["eligibility"] = to_json(c.eligibility);
  root["limits"] = to_json(c.limits);
  root["sim"] = std::move(s);
  return root;
}

ordered_json to_json(const sim::SimEvent& e) { return ordered_json::parse(sim::format_event_line(e)); }

ordered_json to_json(const sim::TelemetryRow& r) {
  ordered_json j;
  j["t"] = r.t;
  j["uav_id"] = r.uav_id;
  j["lane"] = r.lane;
  j["s"] = r.s;
  j["lateral"] = r.lateral;
  j["vertical"] = r.vertical;
  j["speed"] = r.speed;
  j["mode"] = sim::to_string(r.mode);
  j["health"] = sim::to_string(r.health);
  return j;
}

geometry::Point3 point_from(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) bad(field, "expected [east, north, up]");
  try {
    geometry::Point3 p{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    if (!geometry::is_finite(p)) bad(field, "non-finite coordinate");
    return p;
  } catch (const json::exception&) {
    bad(field, "expected numbers");
  }
}

geometry::TimeWindow window_from(const json& j, const std::string& field) {
  geometry::TimeWindow w{required<double>(j, "t_start", field), required<double>(j, "t_end", field)};
  if (!(w.t_start < w.t_end)) bad(field, "t_start must be < t_end");
  return w;
}

geometry::NoFlyZone zone_from(const json& j, const std::string& field) {
  geometry::NoFlyZone z;
  z.id = required<std::string>(j, "id", field);
  const auto& fp = section(j, "footprint", field);
  if (!fp.is_array()) bad(join(field, "footprint"), "expected array");
  for (std::size_t i = 0; i < fp.size(); ++i) {
    const auto& p = fp[i];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      bad(join(field, "footprint[" + std::to_string(i) + "]"), "expected [east, north]");
    z.footprint.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  z.alt_min = required<double>(j, "alt_min", field);
  z.alt_max = required<double>(j, "alt_max", field);
  z.active_window = j.contains("active_window")
                        ? window_from(j.at("active_window"), join(field, "active_window"))
                        : geometry::TimeWindow{-1e18, 1e18};
  guarded(field, [&] {
    z.validate();
    return 0;
  });
  return z;
}

std::vector<geometry::NoFlyZone> zones_from(const json& j, const std::string& field) {
  std::vector<geometry::NoFlyZone> out;
  if (j.is_null()) return out;
  if (!j.is_array()) bad(field, "expected array");
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(zone_from(j[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

geometry::Route route_from(const json& j, const std::string& field) {
  if (!j.is_array()) bad(field, "expected array of points");
  std::vector<geometry::Point3> pts;
  for (std::size_t i = 0; i < j.size(); ++i)
    pts.push_back(point_from(j[i], field + "[" + std::to_string(i) + "]"));
  return geometry::build_route(std::move(pts));
}

geometry::CorridorTube tube_from(const json& j, const std::string& field) {
  auto route = route_from(section(j, "waypoints", field), join(field, "waypoints"));
  const double r = required<double>(j, "radius", field);
  return guarded(join(field, "radius"), [&] { return geometry::CorridorTube(route, r); });
}

lanes::CrossSectionLayout layout_from(const json& j, const std::string& field) {
  const auto kind = required<std::string>(j, "kind", field);
  if (kind == "VerticalStack") {
    return lanes::CrossSectionLayout::vertical_stack(required<double>(j, "spacing", field),
                                                     value<int>(j, "count", field, 4));
  }
  if (kind == "Grid2x2") {
    return lanes::CrossSectionLayout::grid_2x2(required<double>(j, "h_spacing", field),
                                               required<double>(j, "v_spacing", field));
  }
  if (kind == "Custom") {
    std::vector<geometry::CrossSectionOffset> offsets;
    const auto& arr = section(j, "offsets", field);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& o = arr[i];
      if (!o.is_array() || o.size() != 2 || !o[0].is_number() || !o[1].is_number())
        bad(join(field, "offsets[" + std::to_string(i) + "]"), "expected [lateral, vertical]");
      offsets.push_back({o[0].get<double>(), o[1].get<double>()});
    }
    return lanes::CrossSectionLayout::custom(std::move(offsets));
  }
  bad(join(field, "kind"), "expected VerticalStack, Grid2x2 or Custom");
}

lanes::Distribution distribution_from(const json& j, const std::string& field) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "A") return lanes::Distribution::a();
    if (s == "B") return lanes::Distribution::b();
    if (s == "BasicB") return lanes::Distribution::basic_b();
    bad(field, "expected A, B, BasicB or a custom map");
  }
  if (j.is_object()) {
    std::vector<std::pair<std::string, lanes::FlowDirection>> map;
    for (const auto& [k, v] : j.items()) map.emplace_back(k, direction_from(v, join(field, k)));
    return lanes::Distribution::make_custom(std::move(map));
  }
  bad(field, "expected A, B, BasicB or a custom map");
}

fence::FenceConfig fence_from(const json& j, const std::string& field) {
  fence::FenceConfig f;
  if (j.is_null()) return f;
  f.tau_f = value(j, "tau_f", field, f.tau_f);
  f.tau_r = value(j, "tau_r", field, f.tau_r);
  f.d0 = value(j, "d0", field, f.d0);
  f.cross_margin = value(j, "cross_margin", field, f.cross_margin);
  if (j.contains("k")) {
    const auto& k = j.at("k");
    f.k[fence::ComplianceLevel::CL1] = value(k, "CL1", join(field, "k"), f.k[fence::ComplianceLevel::CL1]);
    f.k[fence::ComplianceLevel::CL2] = value(k, "CL2", join(field, "k"), f.k[fence::ComplianceLevel::CL2]);
    f.k[fence::ComplianceLevel::CL3] = value(k, "CL3", join(field, "k"), f.k[fence::ComplianceLevel::CL3]);
  }
  guarded(field, [&] {
    f.validate();
    return 0;
  });
  return f;
}

fence::EligibilityPolicy eligibility_from(const json& j, const std::string& field) {
  fence::EligibilityPolicy p;
  if (j.is_null()) return p;
  p.cl1_max_length = value(j, "cl1_max_length", field, p.cl1_max_length);
  p.cl1_max_duration = value(j, "cl1_max_duration", field, p.cl1_max_duration);
  p.cl2_max_length = value(j, "cl2_max_length", field, p.cl2_max_length);
  p.cl2_max_duration = value(j, "cl2_max_duration", field, p.cl2_max_duration);
  return p;
}

lanes::KinematicLimits limits_from(const json& j, const std::string& field) {
  lanes::KinematicLimits l;
  if (j.is_null()) return l;
  l.max_cross_speed = value(j, "max_cross_speed", field, l.max_cross_speed);
  l.max_speed = value(j, "max_speed", field, l.max_speed);
  l.max_accel = value(j, "max_accel", field, l.max_accel);
  return l;
}

fence::ComplianceLevel cl_from(const json& j, const std::string& field) {
  if (j == "CL1" || j == 1) return fence::ComplianceLevel::CL1;
  if (j == "CL2" || j == 2) return fence::ComplianceLevel::CL2;
  if (j == "CL3" || j == 3) return fence::ComplianceLevel::CL3;
  bad(field, "expected CL1, CL2 or CL3");
}

sim::Mission mission_from(const json& j, const std::string& field) {
  sim::Mission m;
  if (j.is_null()) return m;
  if (j.contains("cl")) m.cl = cl_from(j.at("cl"), join(field, "cl"));
  m.v_target = value(j, "v_target", field, m.v_target);
  m.uav_length = value(j, "uav_length", field, m.uav_length);
  m.uav_span = value(j, "uav_span", field, m.uav_span);
  if (!(m.v_target > 0 && m.uav_length > 0 && m.uav_span > 0))
    bad(field, "v_target, uav_length and uav_span must be > 0");
  return m;
}

lanes::LanePlan plan_from(const json& j, const std::string& field) {
  auto route = route_from(section(j, "route", field), join(field, "route"));
  const double radius = required<double>(j, "corridor_radius", field);
  const auto layout = layout_from(section(j, "layout", field), join(field, "layout"));
  const auto dist = distribution_from(section(j, "distribution", field), join(field, "distribution"));
  const double lane_radius = required<double>(j, "lane_radius", field);
  std::map<std::string, lanes::LaneRole> roles;
  if (j.contains("roles")) {
    for (const auto& [k, v] : j.at("roles").items())
      roles[k] = role_from(v, join(field, "roles." + k));
  }
  return guarded(field, [&] {
    return lanes::plan_lanes(geometry::CorridorTube(route, radius), layout, dist, lane_radius,
                             roles);
  });
}

lanes::LanePlan lane_plan_from(const json& j, const std::string& field) {
  const auto corridor = tube_from(section(j, "corridor", field), join(field, "corridor"));
  const auto layout = layout_from(section(j, "layout", field), join(field, "layout"));
  const auto dist = distribution_from(section(j, "distribution", field), join(field, "distribution"));
  std::vector<lanes::LaneSpec> specs;
  const auto& arr = section(j, "lanes", field);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string lf = join(field, "lanes[" + std::to_string(i) + "]");
    lanes::LaneSpec l;
    l.id = required<std::string>(arr[i], "id", lf);
    l.offset = {required<double>(arr[i], "lateral", lf), required<double>(arr[i], "vertical", lf)};
    l.radius = required<double>(arr[i], "radius", lf);
    l.direction = direction_from(section(arr[i], "direction", lf), join(lf, "direction"));
    l.role = role_from(section(arr[i], "role", lf), join(lf, "role"));
    specs.push_back(std::move(l));
  }
  return guarded(field, [&] { return lanes::LanePlan(corridor, std::move(specs), layout, dist); });
}

sim::SimConfig sim_config_from(const json& root) {
  sim::SimConfig c;
  c.fence = fence_from(root.value("fence", json()), "fence");
  c.eligibility = eligibility_from(root.value("eligibility", json()), "eligibility");
  c.limits = limits_from(root.value("limits", json()), "limits");
  const json s = root.value("sim", json::object());
  const std::string f = "sim";
  c.dt = value(s, "dt", f, c.dt);
  c.seed = value<std::uint64_t>(s, "seed", f, c.seed);
  c.duration = value(s, "duration", f, c.duration);
  c.v_min = value(s, "v_min", f, c.v_min);
  c.v_max = value(s, "v_max", f, c.v_max);
  if (s.contains("stagger_min") && !s.at("stagger_min").is_null())
    c.stagger_min = value(s, "stagger_min", f, 0.0);
  c.headwind = value(s, "headwind", f, c.headwind);
  c.degraded_speed_factor = value(s, "degraded_speed_factor", f, c.degraded_speed_factor);
  c.proportional_band = value(s, "proportional_band", f, c.proportional_band);
  c.record_telemetry = value(s, "record_telemetry", f, c.record_telemetry);
  c.telemetry_stride = value(s, "telemetry_stride", f, c.telemetry_stride);
  c.metrics_warmup = value(s, "metrics_warmup", f, c.metrics_warmup);
  if (s.contains("streams")) {
    const auto& arr = s.at("streams");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string sf = "sim.streams[" + std::to_string(i) + "]";
      sim::SpawnStream st;
      st.lane_id = required<std::string>(arr[i], "lane", sf);
      st.rate_per_hour = required<double>(arr[i], "rate_per_hour", sf);
      st.mission = mission_from(arr[i].value("mission", json()), sf + ".mission");
      st.max_count = value(arr[i], "max_count", sf, st.max_count);
      st.start_time = value(arr[i], "start_time", sf, st.start_time);
      if (st.rate_per_hour < 0) bad(sf + ".rate_per_hour", "must be >= 0");
      c.streams.push_back(std::move(st));
    }
  }
  if (s.contains("scheduled")) {
    const auto& arr = s.at("scheduled");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string sf = "sim.scheduled[" + std::to_string(i) + "]";
      c.scheduled.push_back({required<double>(arr[i], "t", sf),
                             required<std::string>(arr[i], "lane", sf),
                             mission_from(arr[i].value("mission", json()), sf + ".mission")});
    }
  }
  guarded("sim", [&] {
    c.validate();
    return 0;
  });
  return c;
}

SimScenario sim_scenario_from(const json& root) {
  check_version(root);
  SimScenario sc{plan_from(section(root, "plan", ""), "plan"), sim_config_from(root), {},
                 zones_from(root.value("zones", json()), "zones")};
  if (root.contains("injections")) {
    const auto& arr = root.at("injections");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string f = "injections[" + std::to_string(i) + "]";
      sim::Injection inj;
      inj.t = required<double>(arr[i], "t", f);
      inj.uav_id = required<std::string>(arr[i], "uav_id", f);
      const auto kind = required<std::string>(arr[i], "kind", f);
      if (kind == "Fault") {
        inj.kind = sim::Injection::Kind::Fault;
      } else if (kind == "Disturbance") {
        inj.kind = sim::Injection::Kind::Disturbance;
        inj.lateral = value(arr[i], "lateral", f, 0.0);
        inj.vertical = value(arr[i], "vertical", f, 0.0);
      } else if (kind == "CommandLanding") {
        inj.kind = sim::Injection::Kind::CommandLanding;
      } else if (kind == "LaneChange") {
        inj.kind = sim::Injection::Kind::LaneChange;
        inj.target_lane = required<std::string>(arr[i], "target_lane", f);
      } else {
        bad(f + ".kind", "expected Fault, Disturbance, CommandLanding or LaneChange");
      }
      sc.injections.push_back(std::move(inj));
    }
  }
  return sc;
}

json plain(const ordered_json& j) { return json::parse(j.dump()); }

json parse_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(Errc::Parse, what + ": " + e.what());
  }
}

json read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

void write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::Io, "cannot write " + path);
    out << content;
    if (!out.flush()) fail(Errc::Io, "cannot write " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(Errc::Io, "cannot replace " + path);
}

void check_version(const json& root) {
  if (!root.is_object()) bad("", "expected an object");
  const int v = value(root, "version", "", kScenarioVersion);
  if (v != kScenarioVersion) bad("version", "unsupported version " + std::to_string(v));
}

}  // namespace corridrone::io
