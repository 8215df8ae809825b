#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "corridrone/traffic_sim.hpp"

namespace oracles {

using namespace corridrone::sim;

// Independent overlap oracle: along-track intervals and cross-section boxes
// rebuilt from first principles for every same-lane pair, not just neighbors.
inline int brute_force_overlaps(const World& w) {
  const auto& cfg = w.config().fence;
  struct Box {
    double lo, hi, lat, vert, half;
  };
  std::map<std::string, std::vector<Box>> by_lane;
  for (const auto& u : w.uavs()) {
    if (u.mode == Mode::Done || u.mode == Mode::Aborted || u.mode == Mode::LaneChange) continue;
    const double k = cfg.k.at(u.cl);
    const double front = k * (u.speed * cfg.tau_f + cfg.d0);
    const double rear = k * (u.speed * cfg.tau_r + cfg.d0);
    const double half = u.uav_span / 2.0 + cfg.cross_margin;
    by_lane[u.lane_id].push_back({u.progress - u.uav_length / 2 - rear,
                                  u.progress + u.uav_length / 2 + front, u.lateral, u.vertical,
                                  half});
  }
  int n = 0;
  for (const auto& [lane, boxes] : by_lane) {
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      for (std::size_t j = i + 1; j < boxes.size(); ++j) {
        const auto& a = boxes[i];
        const auto& b = boxes[j];
        const bool along = a.lo < b.hi - 1e-9 && b.lo < a.hi - 1e-9;
        const bool lat = std::abs(a.lat - b.lat) < a.half + b.half;
        const bool vert = std::abs(a.vert - b.vert) < a.half + b.half;
        n += along && lat && vert;
      }
    }
  }
  return n;
}

}  // namespace oracles
