#include "corridrone/traffic_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include "json.hpp"

#include "corridrone/error.hpp"

namespace corridrone::sim {

using lanes::FlowDirection;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr double kSpacingSlack = 1e-6;
constexpr double kInf = std::numeric_limits<double>::infinity();

double round_time(double t) { return std::round(t * 1e6) / 1e6; }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

void SimConfig::validate() const {
  require(dt > 0.0, "dt must be > 0");
  require(duration >= 0.0, "duration must be >= 0");
  require(v_min >= 0.0 && v_min <= v_max, "velocity bounds need 0 <= v_min <= v_max");
  require(headwind >= 0.0 && headwind < v_max, "headwind must be in [0, v_max)");
  require(degraded_speed_factor > 0.0 && degraded_speed_factor <= 1.0,
          "degraded_speed_factor must be in (0, 1]");
  require(proportional_band > 1.0, "proportional_band must be > 1");
  require(limits.max_accel > 0.0 && limits.max_cross_speed > 0.0 && limits.max_speed > 0.0,
          "kinematic limits must be > 0");
  require(telemetry_stride >= 1, "telemetry_stride must be >= 1");
  require(!stagger_min || *stagger_min >= 0.0, "stagger_min must be >= 0");
  for (const auto& s : streams) require(s.rate_per_hour >= 0.0, "spawn rates must be >= 0");
  fence.validate();
}

World::World(LanePlan plan, SimConfig cfg, std::vector<geometry::NoFlyZone> zones)
    : plan_(std::move(plan)),
      cfg_(std::move(cfg)),
      zones_(std::move(zones)),
      min_spacing_(kInf),
      min_margin_(kInf),
      min_stagger_(kInf) {
  cfg_.validate();
  const geometry::TimeWindow window{0.0, std::max(cfg_.duration, cfg_.dt)};
  const auto report = lanes::validate_plan(plan_, zones_, window);
  if (!report.valid()) {
    std::vector<std::string> reasons;
    for (const auto& v : report.violations) reasons.push_back(v.lane + ":" + v.other);
    fail(Errc::InvalidPlan, "lane plan failed validation", reasons);
  }
  for (const auto& r : report.risks) {
    if (r.risk != lanes::DownwashRisk::Coupled) continue;
    coupled_.emplace_back(r.a, r.b);
    partners_[r.a].push_back(r.b);
    partners_[r.b].push_back(r.a);
  }

  for (std::size_t i = 0; i < plan_.lanes().size(); ++i) {
    const auto& lane = plan_.lanes()[i];
    lane_metrics_[lane.id].lane = lane.id;
    lane_info_[lane.id] = {i, plan_.cylinder_at(i).centerline().total_length(),
                           lane.direction == FlowDirection::Outflow};
  }

  std::sort(cfg_.scheduled.begin(), cfg_.scheduled.end(),
            [](const ScheduledSpawn& a, const ScheduledSpawn& b) { return a.t < b.t; });
  for (const auto& s : cfg_.scheduled) plan_.lane(s.lane_id);

  for (std::size_t i = 0; i < cfg_.streams.size(); ++i) {
    const auto& spec = cfg_.streams[i];
    plan_.lane(spec.lane_id);
    StreamState st;
    st.rng.seed(splitmix64(cfg_.seed ^ splitmix64(i + 1)));
    st.exhausted = spec.rate_per_hour <= 0.0 || spec.max_count == 0;
    if (!st.exhausted) st.next_arrival = spec.start_time + draw_interarrival(st, spec.rate_per_hour);
    streams_.push_back(std::move(st));
  }

  if (cfg_.stagger_min) {
    stagger_min_ = *cfg_.stagger_min;
  } else {
    double largest = 0.0;
    auto consider = [&](const Mission& m) {
      const double v = std::clamp(m.v_target, cfg_.v_min, effective_v_max());
      largest = std::max(
          largest, fence::core_fence_dims(v, m.cl, m.uav_length, m.uav_span, cfg_.fence).d_t());
    };
    for (const auto& s : cfg_.streams) consider(s.mission);
    for (const auto& s : cfg_.scheduled) consider(s.mission);
    if (largest == 0.0) consider(Mission{ComplianceLevel::CL1, effective_v_max()});
    stagger_min_ = 2.0 * largest;
  }
}

double World::effective_v_max() const {
  return std::min(cfg_.v_max, cfg_.limits.max_speed) - cfg_.headwind;
}

double World::draw_interarrival(StreamState& s, double rate) {
  const double u = static_cast<double>(s.rng() >> 11) * 0x1.0p-53;
  return -std::log1p(-u) * 3600.0 / rate;
}

std::string World::next_uav_id() { return fmt::format("U{:04d}", ++id_counter_); }

UAVState* World::find_mut(const std::string& uav_id) {
  for (auto& u : active_) {
    if (u.id == uav_id) return &u;
  }
  return nullptr;
}

const UAVState* World::find(const std::string& uav_id) const {
  for (const auto& u : active_) {
    if (u.id == uav_id) return &u;
  }
  for (const auto& u : retired_) {
    if (u.id == uav_id) return &u;
  }
  return nullptr;
}

bool World::all_done() const { return active_.empty() && streams_exhausted(); }

bool World::streams_exhausted() const {
  if (scheduled_cursor_ < cfg_.scheduled.size()) return false;
  for (const auto& s : streams_) {
    if (!s.exhausted) return false;
  }
  for (const auto& [lane, q] : queues_) {
    if (!q.empty()) return false;
  }
  return true;
}

const World::LaneInfo& World::info(const std::string& lane) const {
  auto it = lane_info_.find(lane);
  if (it == lane_info_.end()) fail(Errc::PreconditionViolated, "unknown lane " + lane);
  return it->second;
}

const geometry::Route& World::lane_route(const std::string& lane) const {
  return plan_.cylinder_at(info(lane).index).centerline();
}

double World::lane_length(const std::string& lane_id) const { return info(lane_id).length; }

double World::lane_arc(const UAVState& u) const {
  const auto& li = info(u.lane_id);
  return li.outflow ? u.progress : li.length - u.progress;
}

double World::corridor_progress(const UAVState& u) const {
  const auto& li = info(u.lane_id);
  const auto& corridor = plan_.corridor().centerline();
  const double sc = geometry::map_arc(lane_route(u.lane_id), corridor, lane_arc(u));
  return li.outflow ? sc : corridor.total_length() - sc;
}

double World::progress_in(const UAVState& u, const std::string& lane_id) const {
  if (lane_id == u.lane_id) return u.progress;
  const auto& li = info(lane_id);
  const auto& corridor = plan_.corridor().centerline();
  const double pc = corridor_progress(u);
  const double sc = li.outflow ? pc : corridor.total_length() - pc;
  const double sl = geometry::map_arc(corridor, lane_route(lane_id), sc);
  return li.outflow ? sl : li.length - sl;
}

Point3 World::world_position(const UAVState& u) const {
  return lane_route(u.lane_id).to_world({lane_arc(u), u.lateral, u.vertical});
}

fence::CoreGeofence World::fence_of(const UAVState& u) const {
  return fence::core_fence_dims(u.speed, u.cl, u.uav_length, u.uav_span, cfg_.fence);
}

double World::speed_limit(const UAVState& u) const {
  return std::max(0.0, std::min({u.v_target, u.v_cap, effective_v_max()}));
}

World::LaneRefs World::memberships(const UAVState& u) const {
  LaneRefs r;
  if (u.mode == Mode::Done || u.mode == Mode::Aborted) return r;
  r.ids[r.n++] = &u.lane_id;
  if (u.mode == Mode::LaneChange) r.ids[r.n++] = &u.change_target;
  return r;
}

bool World::is_member(const UAVState& u, const std::string& lane) const {
  for (const auto& m : memberships(u)) {
    if (m == lane) return true;
  }
  return false;
}

void World::emit(SimEvent e) { batch_.push_back(std::move(e)); }

void World::flush_events() {
  std::stable_sort(batch_.begin(), batch_.end(), [](const SimEvent& a, const SimEvent& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.uav_id < b.uav_id;
  });
  for (auto& e : batch_) {
    auto pos = std::upper_bound(events_.begin(), events_.end(), e,
                                [](const SimEvent& a, const SimEvent& b) {
                                  if (a.t != b.t) return a.t < b.t;
                                  return a.uav_id < b.uav_id;
                                });
    if (event_sink_) event_sink_(e);
    events_.insert(pos, std::move(e));
  }
  batch_.clear();
}

void World::inject_fault(const std::string& uav_id) {
  UAVState* u = find_mut(uav_id);
  if (!u) {
    if (find(uav_id)) fail(Errc::PreconditionViolated, "UAV " + uav_id + " is no longer active");
    fail(Errc::UnknownUAV, "unknown UAV " + uav_id);
  }
  require(u->health == Health::Nominal, "UAV " + uav_id + " is already faulted");
  u->health = Health::Faulted;
  u->fault_pending = true;
  emit({time_, uav_id, EventType::Fault, u->lane_id, "injected", std::nullopt, std::nullopt});
  flush_events();
}

void World::inject_disturbance(const std::string& uav_id, double lateral, double vertical) {
  UAVState* u = find_mut(uav_id);
  if (!u) fail(Errc::UnknownUAV, "unknown or inactive UAV " + uav_id);
  u->lateral += lateral;
  u->vertical += vertical;
  if (lateral != 0.0 || vertical != 0.0) {
    emit({time_, uav_id, EventType::Disturbance, u->lane_id,
          fmt::format("lateral={} vertical={}", lateral, vertical), std::nullopt, std::nullopt});
    flush_events();
  }
}

void World::command_landing(const std::string& uav_id) {
  UAVState* u = find_mut(uav_id);
  if (!u) fail(Errc::UnknownUAV, "unknown or inactive UAV " + uav_id);
  u->landing_pending = true;
}

void World::land_all() {
  for (auto& u : active_) {
    if (u.mode != Mode::Aborted && u.mode != Mode::Done) u.landing_pending = true;
  }
  for (auto& [lane, q] : queues_) q.clear();
  for (auto& s : streams_) s.exhausted = true;
  scheduled_cursor_ = cfg_.scheduled.size();
}

void World::request_lane_change(const std::string& uav_id, const std::string& target_lane) {
  UAVState* u = find_mut(uav_id);
  if (!u) fail(Errc::UnknownUAV, "unknown or inactive UAV " + uav_id);
  require(u->mode == Mode::Cruise, "lane change needs a cruising UAV");
  const auto& from = plan_.lane(u->lane_id);
  const auto& to = plan_.lane(target_lane);
  // Validates direction compatibility and corridor containment.
  const auto path = lanes::lane_change_path(plan_, from, to,
                                            geometry::map_arc(plan_.cylinder(u->lane_id).centerline(),
                                                              plan_.corridor().centerline(),
                                                              lane_arc(*u)),
                                            std::max(u->speed, 1e-3), cfg_.limits);
  if (path.empty()) return;

  UAVState probe = *u;
  probe.mode = Mode::LaneChange;
  probe.change_target = target_lane;
  const double p_self = progress_in(probe, target_lane);
  const auto self_fence = fence_of(*u);
  for (const auto& other : active_) {
    if (other.id == u->id || !is_member(other, target_lane)) continue;
    const double p_other = progress_in(other, target_lane);
    const auto other_fence = fence_of(other);
    const double h = p_other >= p_self ? fence::min_headway(other_fence, self_fence)
                                       : fence::min_headway(self_fence, other_fence);
    if (std::abs(p_other - p_self) < h + kSpacingSlack) {
      fail(Errc::PreconditionViolated, "target lane " + target_lane + " has no gap for " + uav_id);
    }
  }
  u->mode = Mode::LaneChange;
  u->change_target = target_lane;
  u->change_lateral = to.offset.lateral - from.offset.lateral;
  u->change_vertical = to.offset.vertical - from.offset.vertical;
  u->change_progress = 0.0;
  emit({time_, uav_id, EventType::LaneChangeStart, u->lane_id, target_lane, std::nullopt,
        std::nullopt});
  flush_events();
}

bool World::entry_clear(const std::string& lane_id, const Mission& m,
                        bool& stagger_blocked) const {
  stagger_blocked = false;
  const double v0 = std::clamp(m.v_target, cfg_.v_min, effective_v_max());
  const auto entrant = fence::core_fence_dims(v0, m.cl, m.uav_length, m.uav_span, cfg_.fence);
  for (const auto& u : active_) {
    if (!is_member(u, lane_id)) continue;
    const double p = progress_in(u, lane_id);
    if (p < fence::min_headway(fence_of(u), entrant) + kSpacingSlack) return false;
  }
  if (auto it = partners_.find(lane_id); it != partners_.end()) {
    for (const auto& partner : it->second) {
      for (const auto& u : active_) {
        if (!is_member(u, partner)) continue;
        if (corridor_progress(u) < stagger_min_ + kSpacingSlack) {
          stagger_blocked = true;
          return false;
        }
      }
    }
  }
  return true;
}

SpawnOutcome World::spawn(const std::string& lane_id, const Mission& mission) {
  plan_.lane(lane_id);
  SpawnOutcome out;
  out.uav_id = next_uav_id();
  const double length = lane_length(lane_id);
  const double v0 = std::clamp(mission.v_target, cfg_.v_min, effective_v_max());
  const auto elig = fence::mission_eligibility(mission.cl, length, v0 > 0 ? length / v0 : kInf,
                                               cfg_.eligibility);
  if (!elig.eligible) {
    out.status = SpawnOutcome::Status::Rejected;
    for (auto r : elig.reasons) out.reasons.push_back(fence::to_string(r));
    std::string joined;
    for (const auto& r : out.reasons) joined += (joined.empty() ? "" : ",") + r;
    ++rejected_;
    emit({time_, out.uav_id, EventType::SpawnRejected, lane_id, joined, std::nullopt,
          std::nullopt});
    flush_events();
    return out;
  }
  auto& q = queues_[lane_id];
  bool stagger_blocked = false;
  if (q.empty() && entry_clear(lane_id, mission, stagger_blocked)) {
    UAVState u;
    u.id = out.uav_id;
    u.cl = mission.cl;
    u.lane_id = lane_id;
    u.speed = v0;
    u.v_target = v0;
    u.v_cap = effective_v_max();
    u.uav_length = mission.uav_length;
    u.uav_span = mission.uav_span;
    u.spawn_time = time_;
    u.spawn_seq = std::stoull(u.id.substr(1));
    active_.push_back(u);
    ++lane_metrics_[lane_id].spawned;
    emit({time_, u.id, EventType::Spawn, lane_id, fence::to_string(mission.cl), std::nullopt,
          world_position(u)});
    flush_events();
    out.status = SpawnOutcome::Status::Spawned;
    return out;
  }
  q.push_back({time_, out.uav_id, mission, true});
  if (stagger_blocked) ++stagger_interventions_;
  emit({time_, out.uav_id, EventType::SpawnDeferred, lane_id,
        stagger_blocked ? "stagger" : "headway", std::nullopt, std::nullopt});
  flush_events();
  out.status = SpawnOutcome::Status::Deferred;
  return out;
}

void World::apply_pending() {
  const double t = round_time(static_cast<double>(step_ + 1) * cfg_.dt);
  for (auto& u : active_) {
    if (u.fault_pending) {
      u.fault_pending = false;
      switch (fence::capabilities(u.cl).fault_response) {
        case fence::FaultResponse::None:
          u.mode = Mode::Aborted;
          emit({t, u.id, EventType::ModeChange, u.lane_id, "Aborted", std::nullopt, std::nullopt});
          emit({t, u.id, EventType::OperatorAlert, u.lane_id, "fault without tolerance",
                fence::Severity::Safety, world_position(u)});
          break;
        case fence::FaultResponse::LandImmediately:
          if (u.mode != Mode::Landing) {
            u.mode = Mode::Landing;
            emit({t, u.id, EventType::ModeChange, u.lane_id, "Landing", std::nullopt,
                  std::nullopt});
          }
          break;
        case fence::FaultResponse::Tolerant:
          u.v_cap *= cfg_.degraded_speed_factor;
          emit({t, u.id, EventType::ModeChange, u.lane_id, "Degraded", std::nullopt,
                std::nullopt});
          break;
      }
    }
    if (u.landing_pending) {
      u.landing_pending = false;
      if (u.mode == Mode::Cruise || u.mode == Mode::LaneChange) {
        if (u.mode == Mode::LaneChange) {
          // Abandon the maneuver; the UAV lands from its current offset.
          u.change_target.clear();
          u.change_progress = 0.0;
        }
        u.mode = Mode::Landing;
        emit({t, u.id, EventType::ModeChange, u.lane_id, "Landing", std::nullopt, std::nullopt});
      }
    }
  }
}

void World::control_and_advance(double t_next) {
  const double dt = cfg_.dt;

  // Members of each lane, sorted by descending progress in that lane.
  std::map<std::string, std::vector<std::pair<double, std::size_t>>> members;
  for (std::size_t i = 0; i < active_.size(); ++i) {
    for (const auto& lane : memberships(active_[i])) {
      members[lane].emplace_back(progress_in(active_[i], lane), i);
    }
  }
  for (auto& [lane, list] : members) {
    std::sort(list.begin(), list.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return active_[a.second].spawn_seq < active_[b.second].spawn_seq;
    });
  }

  std::vector<std::size_t> order;
  std::vector<double> corridor_p(active_.size(), 0.0);
  for (std::size_t i = 0; i < active_.size(); ++i) {
    if (active_[i].mode == Mode::Aborted || active_[i].mode == Mode::Done) continue;
    order.push_back(i);
    corridor_p[i] = corridor_progress(active_[i]);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (corridor_p[a] != corridor_p[b]) return corridor_p[a] > corridor_p[b];
    return active_[a].spawn_seq < active_[b].spawn_seq;
  });

  std::vector<UAVState> next = active_;
  std::vector<bool> done(active_.size(), false);

  for (std::size_t idx : order) {
    const UAVState& u = active_[idx];
    UAVState& n = next[idx];
    const double k_u = cfg_.fence.multiplier(u.cl);
    const double a = cfg_.limits.max_accel;

    double v_des = 0.0;
    if (u.mode == Mode::Landing) {
      v_des = std::max(0.0, u.speed - a * dt);
    } else {
      const double goal = speed_limit(u);
      v_des = std::clamp(goal, std::max(0.0, u.speed - a * dt), u.speed + a * dt);
    }
    double cap = kInf;

    for (const auto& lane : memberships(u)) {
      const auto& list = members[lane];
      auto self = std::find_if(list.begin(), list.end(),
                               [&](const auto& e) { return e.second == idx; });
      const double p_u = self->first;
      if (self != list.begin()) {
        const std::size_t li = std::prev(self)->second;
        const UAVState& leader = done[li] ? next[li] : active_[li];
        const double p_l = done[li] ? progress_in(next[li], lane) : std::prev(self)->first;
        const double k_l = cfg_.fence.multiplier(leader.cl);
        const double leader_rear = k_l * (leader.speed * cfg_.fence.tau_r + cfg_.fence.d0);
        // Proportional slowdown toward the leader's speed inside the band.
        if (u.mode != Mode::Landing && v_des > leader.speed) {
          const auto f_lead = fence_of(leader);
          const auto f_self =
              fence::core_fence_dims(v_des, u.cl, u.uav_length, u.uav_span, cfg_.fence);
          const double h = fence::min_headway(f_lead, f_self);
          const double gap = p_l - (p_u + v_des * dt);
          if (gap < cfg_.proportional_band * h) {
            const double ratio =
                std::clamp((gap - h) / ((cfg_.proportional_band - 1.0) * h), 0.0, 1.0);
            v_des = leader.speed + (v_des - leader.speed) * ratio;
          }
        }
        const double fixed = k_u * cfg_.fence.d0 + u.uav_length / 2.0 + leader_rear +
                             leader.uav_length / 2.0;
        cap = std::min(cap, (p_l - p_u - fixed - kSpacingSlack) / (dt + k_u * cfg_.fence.tau_f));
      }
      if (std::next(self) != list.end()) {
        const std::size_t fi = std::next(self)->second;
        const UAVState& follower = active_[fi];
        const double p_f = std::next(self)->first;
        const double k_f = cfg_.fence.multiplier(follower.cl);
        const double growth = k_u * cfg_.fence.tau_r - dt;
        if (growth > 0.0) {
          const double base = k_f * cfg_.fence.d0 + follower.uav_length / 2.0 +
                              k_u * cfg_.fence.d0 + u.uav_length / 2.0;
          cap = std::min(cap, (p_u - p_f - base - kSpacingSlack) / growth);
        }
      }
    }

    // Stagger: stay stagger_min behind the nearest same-direction UAV ahead in
    // any coupled partner lane. Order is preserved, so the later entrant yields.
    bool stagger_bound = false;
    for (const auto& lane : memberships(u)) {
      auto it = partners_.find(lane);
      if (it == partners_.end()) continue;
      for (const auto& partner : it->second) {
        if (is_member(u, partner)) continue;
        double nearest = kInf;
        for (const auto& [p, wi] : members[partner]) {
          const UAVState& w = active_[wi];
          const double pw = corridor_p[wi];
          const bool ahead = pw > corridor_p[idx] ||
                             (pw == corridor_p[idx] && w.spawn_seq < u.spawn_seq);
          if (ahead) nearest = std::min(nearest, pw);
        }
        if (nearest == kInf) continue;
        // Convert the corridor-progress limit into this UAV's lane progress.
        const double allowed_corridor = nearest - stagger_min_ - kSpacingSlack;
        const bool own_outflow = info(u.lane_id).outflow;
        const auto& corridor = plan_.corridor().centerline();
        const double sc = own_outflow ? allowed_corridor
                              : corridor.total_length() - allowed_corridor;
        double limit_progress;
        if (allowed_corridor < 0.0) {
          limit_progress = -kInf;
        } else {
          const double sl = geometry::map_arc(corridor, lane_route(u.lane_id),
                                              std::clamp(sc, 0.0, corridor.total_length()));
          limit_progress = own_outflow ? sl : lane_length(u.lane_id) - sl;
        }
        const double stagger_cap = (limit_progress - u.progress) / dt;
        if (stagger_cap < v_des) stagger_bound = true;
        cap = std::min(cap, stagger_cap);
      }
    }

    double v_new = std::max(0.0, std::min(v_des, cap));
    if (stagger_bound && v_new < v_des) {
      ++stagger_interventions_;
      if (!stagger_holding_[u.id]) {
        emit({t_next, u.id, EventType::StaggerHold, u.lane_id, "", std::nullopt, std::nullopt});
      }
      stagger_holding_[u.id] = true;
    } else {
      stagger_holding_.erase(u.id);
    }

    n.speed = v_new;
    n.progress = u.progress + v_new * dt;
    const double length = lane_length(u.lane_id);
    if (n.progress >= length && u.mode != Mode::LaneChange) {
      n.progress = length;
      n.speed = 0.0;
      if (!u.arrived) {
        n.arrived = true;
        auto& lm = lane_metrics_[u.lane_id];
        ++lm.completed;
        if (t_next > cfg_.metrics_warmup) ++lm.completed_after_warmup;
        emit({t_next, u.id, EventType::Arrival, u.lane_id, "", std::nullopt, std::nullopt});
        if (n.mode != Mode::Landing) {
          n.mode = Mode::Landing;
          emit({t_next, u.id, EventType::ModeChange, u.lane_id, "Landing", std::nullopt,
                std::nullopt});
        }
      }
    } else if (n.progress >= length) {
      n.progress = length;
    }
    if (u.mode == Mode::Landing && u.speed == 0.0 && v_new == 0.0) {
      n.mode = Mode::Done;
      if (!u.arrived) ++landed_;
      emit({t_next, u.id, EventType::ModeChange, u.lane_id, "Done", std::nullopt, std::nullopt});
    } else if (u.mode == Mode::Landing && v_new == 0.0 && !n.arrived) {
      n.mode = Mode::Done;
      ++landed_;
      emit({t_next, u.id, EventType::ModeChange, u.lane_id, "Done", std::nullopt, std::nullopt});
    }
    done[idx] = true;
  }
  active_ = std::move(next);
}

void World::progress_cross_motion(double t_next) {
  const double budget_per_step = cfg_.limits.max_cross_speed * cfg_.dt;
  for (auto& u : active_) {
    if (u.mode == Mode::Aborted || u.mode == Mode::Done) continue;
    if (u.mode == Mode::LaneChange) {
      // Horizontal leg first, then vertical.
      double budget = budget_per_step;
      auto move_axis = [&](double& value, double target) {
        const double delta = target - value;
        const double stepv = std::clamp(delta, -budget, budget);
        value += stepv;
        budget -= std::abs(stepv);
      };
      move_axis(u.lateral, u.change_lateral);
      if (u.lateral == u.change_lateral) move_axis(u.vertical, u.change_vertical);
      const double total = std::abs(u.change_lateral) + std::abs(u.change_vertical);
      const double covered = total - std::abs(u.change_lateral - u.lateral) -
                             std::abs(u.change_vertical - u.vertical);
      u.change_progress = total > 0.0 ? covered / total : 1.0;
      if (u.lateral == u.change_lateral && u.vertical == u.change_vertical) {
        const std::string from = u.lane_id;
        const double p_target = progress_in(u, u.change_target);
        u.lane_id = u.change_target;
        u.progress = p_target;
        u.lateral = 0.0;
        u.vertical = 0.0;
        u.change_target.clear();
        u.change_lateral = u.change_vertical = u.change_progress = 0.0;
        u.mode = Mode::Cruise;
        emit({t_next, u.id, EventType::LaneChangeEnd, u.lane_id, from, std::nullopt,
              std::nullopt});
      }
      continue;
    }
    // Autonomous re-entry toward the lane centerline.
    const double off = std::hypot(u.lateral, u.vertical);
    if (off > 0.0) {
      if (off <= budget_per_step) {
        u.lateral = u.vertical = 0.0;
      } else {
        const double k = (off - budget_per_step) / off;
        u.lateral *= k;
        u.vertical *= k;
      }
    }
  }
}

void World::admit_spawns(double t_next) {
  // Collect new arrivals for this step, ordered by arrival time.
  struct Arrival {
    double t;
    std::size_t order;
    std::string lane;
    Mission mission;
  };
  std::vector<Arrival> fresh;
  std::size_t seq = 0;
  while (scheduled_cursor_ < cfg_.scheduled.size() &&
         cfg_.scheduled[scheduled_cursor_].t <= t_next) {
    const auto& s = cfg_.scheduled[scheduled_cursor_++];
    fresh.push_back({s.t, seq++, s.lane_id, s.mission});
  }
  for (std::size_t i = 0; i < streams_.size(); ++i) {
    auto& st = streams_[i];
    const auto& spec = cfg_.streams[i];
    while (!st.exhausted && st.next_arrival <= t_next) {
      fresh.push_back({st.next_arrival, seq++, spec.lane_id, spec.mission});
      ++st.emitted;
      if (spec.max_count >= 0 && st.emitted >= spec.max_count) {
        st.exhausted = true;
      } else {
        st.next_arrival += draw_interarrival(st, spec.rate_per_hour);
      }
    }
  }
  std::stable_sort(fresh.begin(), fresh.end(), [](const Arrival& a, const Arrival& b) {
    return a.t < b.t;
  });
  for (auto& a : fresh) {
    queues_[a.lane].push_back({a.t, next_uav_id(), a.mission, false});
  }

  for (auto& [lane_id, q] : queues_) {
    while (!q.empty()) {
      Pending& head = q.front();
      const double length = lane_length(lane_id);
      const double v0 = std::clamp(head.mission.v_target, cfg_.v_min, effective_v_max());
      const auto elig = fence::mission_eligibility(
          head.mission.cl, length, v0 > 0 ? length / v0 : kInf, cfg_.eligibility);
      if (!elig.eligible) {
        std::string joined;
        for (auto r : elig.reasons) joined += (joined.empty() ? "" : ",") + fence::to_string(r);
        ++rejected_;
        emit({t_next, head.uav_id, EventType::SpawnRejected, lane_id, joined, std::nullopt,
              std::nullopt});
        q.pop_front();
        continue;
      }
      bool stagger_blocked = false;
      if (!entry_clear(lane_id, head.mission, stagger_blocked)) {
        ++deferred_steps_;
        if (stagger_blocked) ++stagger_interventions_;
        if (!head.deferred_logged) {
          head.deferred_logged = true;
          emit({t_next, head.uav_id, EventType::SpawnDeferred, lane_id,
                stagger_blocked ? "stagger" : "headway", std::nullopt, std::nullopt});
        }
        break;
      }
      UAVState u;
      u.id = head.uav_id;
      u.cl = head.mission.cl;
      u.lane_id = lane_id;
      u.speed = v0;
      u.v_target = v0;
      u.v_cap = effective_v_max();
      u.uav_length = head.mission.uav_length;
      u.uav_span = head.mission.uav_span;
      u.spawn_time = t_next;
      u.spawn_seq = std::stoull(u.id.substr(1));
      active_.push_back(u);
      ++lane_metrics_[lane_id].spawned;
      emit({t_next, u.id, EventType::Spawn, lane_id, fence::to_string(u.cl), std::nullopt,
            world_position(u)});
      q.pop_front();
    }
  }
}

void World::run_checks(double t_next) {
  const auto& corridor = plan_.corridor();
  for (const auto& u : active_) {
    if (u.mode == Mode::Done || u.mode == Mode::Aborted) continue;
    const Point3 pos = world_position(u);
    auto raw = fence::check_containment(u.id, pos, plan_.cylinder_at(info(u.lane_id).index),
                                        corridor, t_next);
    if (u.mode == Mode::LaneChange) {
      // Between lanes only the corridor layer applies.
      raw.erase(std::remove_if(raw.begin(), raw.end(),
                               [](const fence::BreachEvent& e) {
                                 return e.kind == fence::BreachKind::LaneBreach;
                               }),
                raw.end());
    }
    for (const auto& b : debounce_.filter(u.id, std::move(raw))) {
      ++breach_counts_[b.kind];
      emit({t_next, u.id, EventType::Breach, u.lane_id, fence::to_string(b.kind), b.severity,
            b.position});
    }
  }

  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < active_.size(); ++i) {
    for (const auto& lane : memberships(active_[i])) members[lane].push_back(i);
  }
  // Pair keys are only materialized while some pair is (or was) overlapping.
  bool pair_state = false;
  for (auto it = debounce_.state().lower_bound("p:");
       it != debounce_.state().end() && it->first.rfind("p:", 0) == 0; ++it) {
    pair_state = true;
    break;
  }
  std::vector<std::string> live_pairs;
  for (auto& [lane, list] : members) {
    std::vector<std::pair<double, std::size_t>> sorted;
    for (auto i : list) sorted.emplace_back(progress_in(active_[i], lane), i);
    std::sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return active_[a.second].spawn_seq < active_[b.second].spawn_seq;
    });
    auto placed = [&](const std::pair<double, std::size_t>& e) {
      const UAVState& u = active_[e.second];
      double lat = u.lateral;
      double vert = u.vertical;
      if (lane != u.lane_id) {
        lat -= u.change_lateral;
        vert -= u.change_vertical;
      }
      return fence::PlacedFence{e.first, lat, vert, fence_of(u)};
    };
    for (std::size_t k = 1; k < sorted.size(); ++k) {
      const auto lead = placed(sorted[k - 1]);
      const auto follow = placed(sorted[k]);
      const double spacing = lead.progress - follow.progress;
      min_spacing_ = std::min(min_spacing_, spacing);
      min_margin_ = std::min(min_margin_, spacing - fence::min_headway(lead.fence, follow.fence));
      const auto& lu = active_[sorted[k - 1].second];
      const auto& fu = active_[sorted[k].second];
      const bool overlap = fence::core_overlap(lead, follow);
      if (!overlap && !pair_state) continue;
      const std::string key = "p:" + lane + lu.id + fu.id;
      live_pairs.push_back(key);
      if (debounce_.rising(key, overlap)) {
        ++breach_counts_[fence::BreachKind::CoreOverlap];
        emit({t_next, fu.id, EventType::Breach, lane,
              fence::to_string(fence::BreachKind::CoreOverlap) + ":" + lu.id,
              fence::Severity::Safety, world_position(fu)});
      }
    }
  }
  std::sort(live_pairs.begin(), live_pairs.end());
  std::vector<std::string> stale;
  if (pair_state) {
  for (const auto& [key, on] : debounce_.state()) {
    if (key.rfind("p:", 0) == 0 && !std::binary_search(live_pairs.begin(), live_pairs.end(), key))
      stale.push_back(key);
  }
  }
  for (const auto& key : stale) debounce_.rising(key, false);

  for (const auto& [a, b] : coupled_) {
    for (auto i : members[a]) {
      for (auto j : members[b]) {
        if (i == j) continue;
        min_stagger_ = std::min(
            min_stagger_, std::abs(corridor_progress(active_[i]) - corridor_progress(active_[j])));
      }
    }
  }
}

void World::record_telemetry(double t_next) {
  if (!cfg_.record_telemetry || step_ % static_cast<std::uint64_t>(cfg_.telemetry_stride) != 0)
    return;
  std::vector<const UAVState*> order;
  for (const auto& u : active_) order.push_back(&u);
  std::sort(order.begin(), order.end(),
            [](const UAVState* a, const UAVState* b) { return a->id < b->id; });
  for (const auto* u : order) {
    TelemetryRow row{t_next, u->id, u->lane_id, lane_arc(*u), u->lateral, u->vertical,
                     u->speed, u->mode, u->health};
    if (telemetry_sink_) telemetry_sink_(row);
    telemetry_.push_back(std::move(row));
  }
}

void World::retire(double) {
  std::vector<UAVState> keep;
  for (auto& u : active_) {
    if (u.mode == Mode::Done || u.mode == Mode::Aborted) {
      if (u.mode == Mode::Aborted) ++aborted_;
      debounce_.clear(u.id + "/");
      stagger_holding_.erase(u.id);
      retired_.push_back(std::move(u));
    } else {
      keep.push_back(std::move(u));
    }
  }
  active_ = std::move(keep);
}

void World::step() {
  const double t_next = round_time(static_cast<double>(step_ + 1) * cfg_.dt);
  apply_pending();
  control_and_advance(t_next);
  progress_cross_motion(t_next);
  admit_spawns(t_next);
  run_checks(t_next);
  ++step_;
  time_ = t_next;
  record_telemetry(t_next);
  retire(t_next);
  flush_events();
}

SimMetrics World::metrics() const {
  SimMetrics m;
  const double observed = time_ - cfg_.metrics_warmup;
  for (const auto& [id, lm] : lane_metrics_) {
    LaneMetrics out = lm;
    out.throughput_per_hour = observed > 0.0 ? lm.completed_after_warmup * 3600.0 / observed : 0.0;
    m.spawned += lm.spawned;
    m.completed += lm.completed;
    m.lanes.push_back(std::move(out));
  }
  m.min_same_lane_spacing = min_spacing_;
  m.min_headway_margin = min_margin_;
  m.breach_counts = breach_counts_;
  m.landed = landed_;
  m.aborted = aborted_;
  m.rejected = rejected_;
  m.deferred_spawn_steps = deferred_steps_;
  m.stagger_interventions = stagger_interventions_;
  m.min_stagger_offset = min_stagger_;
  return m;
}

SimReport World::report() const { return {events_, telemetry_, metrics()}; }

// ---- serialization ----

std::string to_string(Mode m) {
  switch (m) {
    case Mode::Cruise: return "Cruise";
    case Mode::LaneChange: return "LaneChange";
    case Mode::Landing: return "Landing";
    case Mode::Aborted: return "Aborted";
    case Mode::Done: return "Done";
  }
  return "?";
}

std::string to_string(Health h) { return h == Health::Nominal ? "Nominal" : "Faulted"; }

std::string to_string(EventType t) {
  switch (t) {
    case EventType::Spawn: return "Spawn";
    case EventType::SpawnDeferred: return "SpawnDeferred";
    case EventType::SpawnRejected: return "SpawnRejected";
    case EventType::Breach: return "Breach";
    case EventType::Fault: return "Fault";
    case EventType::Disturbance: return "Disturbance";
    case EventType::ModeChange: return "ModeChange";
    case EventType::OperatorAlert: return "OperatorAlert";
    case EventType::StaggerHold: return "StaggerHold";
    case EventType::LaneChangeStart: return "LaneChangeStart";
    case EventType::LaneChangeEnd: return "LaneChangeEnd";
    case EventType::Arrival: return "Arrival";
  }
  return "?";
}

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const E (&all)[N]) {
  for (E e : all) {
    if (to_string(e) == s) return e;
  }
  fail(Errc::Parse, "unknown value '" + s + "'");
}

constexpr Mode kModes[] = {Mode::Cruise, Mode::LaneChange, Mode::Landing, Mode::Aborted,
                           Mode::Done};
constexpr EventType kEventTypes[] = {
    EventType::Spawn,        EventType::SpawnDeferred, EventType::SpawnRejected,
    EventType::Breach,       EventType::Fault,         EventType::Disturbance,
    EventType::ModeChange,   EventType::OperatorAlert, EventType::StaggerHold,
    EventType::LaneChangeStart, EventType::LaneChangeEnd, EventType::Arrival};

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double num_of(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

ordered_json event_json(const SimEvent& e) {
  ordered_json j;
  j["t"] = e.t;
  j["uav_id"] = e.uav_id;
  j["type"] = to_string(e.type);
  j["lane"] = e.lane;
  j["detail"] = e.detail;
  if (e.severity) j["severity"] = fence::to_string(*e.severity);
  if (e.position) j["position"] = ordered_json::array({e.position->east, e.position->north, e.position->up});
  return j;
}

SimEvent event_from_json(const json& j) {
  SimEvent e;
  e.t = j.at("t").get<double>();
  e.uav_id = j.at("uav_id").get<std::string>();
  e.type = parse_enum(j.at("type").get<std::string>(), kEventTypes);
  e.lane = j.at("lane").get<std::string>();
  e.detail = j.at("detail").get<std::string>();
  if (j.contains("severity"))
    e.severity = j["severity"] == "Warning" ? fence::Severity::Warning : fence::Severity::Safety;
  if (j.contains("position"))
    e.position = Point3{j["position"][0].get<double>(), j["position"][1].get<double>(),
                        j["position"][2].get<double>()};
  return e;
}

json mission_json(const Mission& m) {
  return {{"cl", static_cast<int>(m.cl)},
          {"v_target", m.v_target},
          {"uav_length", m.uav_length},
          {"uav_span", m.uav_span}};
}

Mission mission_from_json(const json& j) {
  return {static_cast<ComplianceLevel>(j.at("cl").get<int>()), j.at("v_target").get<double>(),
          j.at("uav_length").get<double>(), j.at("uav_span").get<double>()};
}

json uav_json(const UAVState& u) {
  return {{"id", u.id},
          {"cl", static_cast<int>(u.cl)},
          {"lane", u.lane_id},
          {"progress", u.progress},
          {"lateral", u.lateral},
          {"vertical", u.vertical},
          {"speed", u.speed},
          {"v_target", u.v_target},
          {"v_cap", u.v_cap},
          {"mode", to_string(u.mode)},
          {"faulted", u.health == Health::Faulted},
          {"uav_length", u.uav_length},
          {"uav_span", u.uav_span},
          {"spawn_time", u.spawn_time},
          {"spawn_seq", u.spawn_seq},
          {"change_target", u.change_target},
          {"change_lateral", u.change_lateral},
          {"change_vertical", u.change_vertical},
          {"change_progress", u.change_progress},
          {"fault_pending", u.fault_pending},
          {"landing_pending", u.landing_pending},
          {"arrived", u.arrived}};
}

UAVState uav_from_json(const json& j) {
  UAVState u;
  u.id = j.at("id").get<std::string>();
  u.cl = static_cast<ComplianceLevel>(j.at("cl").get<int>());
  u.lane_id = j.at("lane").get<std::string>();
  u.progress = j.at("progress").get<double>();
  u.lateral = j.at("lateral").get<double>();
  u.vertical = j.at("vertical").get<double>();
  u.speed = j.at("speed").get<double>();
  u.v_target = j.at("v_target").get<double>();
  u.v_cap = j.at("v_cap").get<double>();
  u.mode = parse_enum(j.at("mode").get<std::string>(), kModes);
  u.health = j.at("faulted").get<bool>() ? Health::Faulted : Health::Nominal;
  u.uav_length = j.at("uav_length").get<double>();
  u.uav_span = j.at("uav_span").get<double>();
  u.spawn_time = j.at("spawn_time").get<double>();
  u.spawn_seq = j.at("spawn_seq").get<std::uint64_t>();
  u.change_target = j.at("change_target").get<std::string>();
  u.change_lateral = j.at("change_lateral").get<double>();
  u.change_vertical = j.at("change_vertical").get<double>();
  u.change_progress = j.at("change_progress").get<double>();
  u.fault_pending = j.at("fault_pending").get<bool>();
  u.landing_pending = j.at("landing_pending").get<bool>();
  u.arrived = j.at("arrived").get<bool>();
  return u;
}

}  // namespace

std::string World::snapshot() const {
  json j;
  j["version"] = 1;
  j["step"] = step_;
  j["time"] = time_;
  j["id_counter"] = id_counter_;
  j["stagger_min"] = stagger_min_;
  j["active"] = json::array();
  for (const auto& u : active_) j["active"].push_back(uav_json(u));
  j["retired"] = json::array();
  for (const auto& u : retired_) j["retired"].push_back(uav_json(u));
  j["queues"] = json::object();
  for (const auto& [lane, q] : queues_) {
    auto& arr = j["queues"][lane] = json::array();
    for (const auto& p : q) {
      arr.push_back({{"arrival", p.arrival},
                     {"uav_id", p.uav_id},
                     {"mission", mission_json(p.mission)},
                     {"deferred_logged", p.deferred_logged}});
    }
  }
  j["streams"] = json::array();
  for (const auto& s : streams_) {
    std::ostringstream rng;
    rng << s.rng;
    j["streams"].push_back({{"rng", rng.str()},
                            {"next_arrival", s.next_arrival},
                            {"emitted", s.emitted},
                            {"exhausted", s.exhausted}});
  }
  j["scheduled_cursor"] = scheduled_cursor_;
  j["debounce"] = debounce_.state();
  j["stagger_holding"] = stagger_holding_;
  j["events"] = json::array();
  for (const auto& e : events_) j["events"].push_back(json::parse(event_json(e).dump()));
  j["lane_metrics"] = json::object();
  for (const auto& [id, lm] : lane_metrics_) {
    j["lane_metrics"][id] = {{"spawned", lm.spawned},
                             {"completed", lm.completed},
                             {"completed_after_warmup", lm.completed_after_warmup}};
  }
  j["breach_counts"] = json::object();
  for (const auto& [k, n] : breach_counts_) j["breach_counts"][fence::to_string(k)] = n;
  j["min_spacing"] = num(min_spacing_);
  j["min_margin"] = num(min_margin_);
  j["min_stagger"] = num(min_stagger_);
  j["landed"] = landed_;
  j["aborted"] = aborted_;
  j["rejected"] = rejected_;
  j["deferred_steps"] = deferred_steps_;
  j["stagger_interventions"] = stagger_interventions_;
  return j.dump();
}

void World::restore(const std::string& snapshot) {
  json j;
  try {
    j = json::parse(snapshot);
  } catch (const json::exception& e) {
    fail(Errc::Parse, std::string("bad snapshot: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != 1) fail(Errc::Parse, "unsupported snapshot version");
    if (j.at("streams").size() != streams_.size())
      fail(Errc::Parse, "snapshot does not match the configured spawn streams");
    step_ = j.at("step").get<std::uint64_t>();
    time_ = j.at("time").get<double>();
    id_counter_ = j.at("id_counter").get<std::uint64_t>();
    stagger_min_ = j.at("stagger_min").get<double>();
    active_.clear();
    for (const auto& u : j.at("active")) active_.push_back(uav_from_json(u));
    retired_.clear();
    for (const auto& u : j.at("retired")) retired_.push_back(uav_from_json(u));
    queues_.clear();
    for (const auto& [lane, arr] : j.at("queues").items()) {
      auto& q = queues_[lane];
      for (const auto& p : arr) {
        q.push_back({p.at("arrival").get<double>(), p.at("uav_id").get<std::string>(),
                     mission_from_json(p.at("mission")), p.at("deferred_logged").get<bool>()});
      }
    }
    for (std::size_t i = 0; i < streams_.size(); ++i) {
      const auto& s = j["streams"][i];
      std::istringstream rng(s.at("rng").get<std::string>());
      rng >> streams_[i].rng;
      streams_[i].next_arrival = s.at("next_arrival").get<double>();
      streams_[i].emitted = s.at("emitted").get<int>();
      streams_[i].exhausted = s.at("exhausted").get<bool>();
    }
    scheduled_cursor_ = j.at("scheduled_cursor").get<std::size_t>();
    debounce_.restore(j.at("debounce").get<std::map<std::string, bool>>());
    stagger_holding_ = j.at("stagger_holding").get<std::map<std::string, bool>>();
    events_.clear();
    for (const auto& e : j.at("events")) events_.push_back(event_from_json(e));
    telemetry_.clear();
    for (auto& [id, lm] : lane_metrics_) lm = LaneMetrics{id};
    for (const auto& [id, m] : j.at("lane_metrics").items()) {
      auto& lm = lane_metrics_[id];
      lm.lane = id;
      lm.spawned = m.at("spawned").get<int>();
      lm.completed = m.at("completed").get<int>();
      lm.completed_after_warmup = m.at("completed_after_warmup").get<int>();
    }
    breach_counts_.clear();
    for (const auto& [k, n] : j.at("breach_counts").items()) {
      for (auto kind : {fence::BreachKind::LaneBreach, fence::BreachKind::CorridorBreach,
                        fence::BreachKind::CoreOverlap}) {
        if (fence::to_string(kind) == k) breach_counts_[kind] = n.get<int>();
      }
    }
    min_spacing_ = num_of(j.at("min_spacing"));
    min_margin_ = num_of(j.at("min_margin"));
    min_stagger_ = num_of(j.at("min_stagger"));
    landed_ = j.at("landed").get<int>();
    aborted_ = j.at("aborted").get<int>();
    rejected_ = j.at("rejected").get<int>();
    deferred_steps_ = j.at("deferred_steps").get<long>();
    stagger_interventions_ = j.at("stagger_interventions").get<long>();
    batch_.clear();
  } catch (const json::exception& e) {
    fail(Errc::Parse, std::string("bad snapshot: ") + e.what());
  }
}

SimReport run_scenario(const LanePlan& plan, const SimConfig& cfg,
                       const std::vector<Injection>& injections,
                       const std::vector<geometry::NoFlyZone>& zones) {
  World world(plan, cfg, zones);
  auto pending = injections;
  std::stable_sort(pending.begin(), pending.end(),
                   [](const Injection& a, const Injection& b) { return a.t < b.t; });
  std::size_t next = 0;
  const auto total_steps = static_cast<std::uint64_t>(std::llround(cfg.duration / cfg.dt));
  while (world.step_index() < total_steps) {
    while (next < pending.size() && pending[next].t <= world.time() + 1e-9) {
      const auto& inj = pending[next++];
      switch (inj.kind) {
        case Injection::Kind::Fault: world.inject_fault(inj.uav_id); break;
        case Injection::Kind::Disturbance:
          world.inject_disturbance(inj.uav_id, inj.lateral, inj.vertical);
          break;
        case Injection::Kind::CommandLanding: world.command_landing(inj.uav_id); break;
        case Injection::Kind::LaneChange:
          world.request_lane_change(inj.uav_id, inj.target_lane);
          break;
      }
    }
    world.step();
  }
  return world.report();
}

std::string format_event_line(const SimEvent& e) { return event_json(e).dump(); }

std::string format_telemetry_csv(const std::vector<TelemetryRow>& rows) {
  std::string out = "t,uav_id,lane,s,lateral,vertical,speed,mode,health\n";
  for (const auto& r : rows) {
    out += fmt::format("{:.3f},{},{},{:.4f},{:.4f},{:.4f},{:.4f},{},{}\n", r.t, r.uav_id, r.lane,
                       r.s, r.lateral, r.vertical, r.speed, to_string(r.mode),
                       to_string(r.health));
  }
  return out;
}

std::string format_metrics_json(const SimMetrics& m) {
  ordered_json j;
  j["spawned"] = m.spawned;
  j["completed"] = m.completed;
  j["landed"] = m.landed;
  j["aborted"] = m.aborted;
  j["rejected"] = m.rejected;
  j["deferred_spawn_steps"] = m.deferred_spawn_steps;
  j["stagger_interventions"] = m.stagger_interventions;
  j["min_same_lane_spacing"] = num(m.min_same_lane_spacing);
  j["min_headway_margin"] = num(m.min_headway_margin);
  j["min_stagger_offset"] = num(m.min_stagger_offset);
  ordered_json breaches = ordered_json::object();
  for (auto kind : {fence::BreachKind::LaneBreach, fence::BreachKind::CorridorBreach,
                    fence::BreachKind::CoreOverlap}) {
    auto it = m.breach_counts.find(kind);
    breaches[fence::to_string(kind)] = it == m.breach_counts.end() ? 0 : it->second;
  }
  j["breaches"] = breaches;
  j["lanes"] = ordered_json::array();
  for (const auto& l : m.lanes) {
    ordered_json lj;
    lj["lane"] = l.lane;
    lj["spawned"] = l.spawned;
    lj["completed"] = l.completed;
    lj["completed_after_warmup"] = l.completed_after_warmup;
    lj["throughput_per_hour"] = l.throughput_per_hour;
    j["lanes"].push_back(std::move(lj));
  }
  return j.dump(2);
}

}  // namespace corridrone::sim
