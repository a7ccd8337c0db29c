#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ascent/dataset.hpp"
#include "ascent/geometry.hpp"

namespace ascent {

enum class Maneuver : int {
  full_pattern = 0,
  departure_straight = 1,
  departure_turn = 2,
  go_around = 3,
  landing = 4,
};

constexpr std::array<Maneuver, 5> kAllManeuvers = {
    Maneuver::full_pattern, Maneuver::departure_straight, Maneuver::departure_turn,
    Maneuver::go_around, Maneuver::landing,
};

inline std::string maneuver_name(Maneuver m) {
  switch (m) {
    case Maneuver::full_pattern: return "full_pattern";
    case Maneuver::departure_straight: return "departure_straight";
    case Maneuver::departure_turn: return "departure_turn";
    case Maneuver::go_around: return "go_around";
    case Maneuver::landing: return "landing";
  }
  return "unknown";
}

// Standard traffic-pattern geometry around a runway. Legs are indexed
// upwind, crosswind, downwind, base, final.
struct PatternSpec {
  Vec3 runway_a{0.0, 0.0, 0.0};
  Vec3 runway_b{1.2, 0.0, 0.0};
  double pattern_altitude = 0.3;  // km AGL
  std::array<double, 5> leg_lengths{3.0, 1.5, 3.0, 1.5, 3.0};
  double cruise_speed = 0.03;  // km/s (~60 kt)
  double turn_rate = 0.15;     // rad/s
  bool left_traffic = true;
  double noise_sigma = 0.0;  // km
  std::uint64_t seed = 0;

  void validate() const {
    for (double l : leg_lengths) {
      if (l <= 0.0) throw ConfigError("pattern leg lengths must be positive");
    }
    if (cruise_speed <= 0.0 || turn_rate <= 0.0) {
      throw ConfigError("cruise speed and turn rate must be positive");
    }
    if (noise_sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
    if (pattern_altitude <= 0.0) throw ConfigError("pattern altitude must be positive");
  }
};

struct BranchAnnotation {
  Maneuver other;
  double divergence_time;  // s since scenario start; paths identical before it
};

struct Scenario {
  Maneuver maneuver = Maneuver::full_pattern;
  Trajectory trajectory;
  std::vector<BranchAnnotation> branches;
};

namespace detail {

struct FlightState {
  Vec3 pos;
  double yaw = 0.0;
};

// One 1 Hz simulation step at constant 3D speed: optional turn toward a
// target yaw, climb/descend toward a target altitude at a fixed flight-path
// angle, then advance along the heading.
inline void sim_step(FlightState& st, const PatternSpec& spec, double dt, double target_yaw,
                     bool turning, double target_alt, double climb_angle) {
  if (turning) {
    double delta = wrap_angle(target_yaw - st.yaw);
    double max_step = spec.turn_rate * dt;
    if (std::abs(delta) <= max_step) {
      st.yaw = target_yaw;
    } else {
      st.yaw = wrap_angle(st.yaw + (delta > 0 ? max_step : -max_step));
    }
  }
  double pitch = 0.0;
  const double dz = target_alt - st.pos.z;
  if (std::abs(dz) > 1e-9) {
    pitch = dz > 0 ? climb_angle : -climb_angle;
    // Don't overshoot the target altitude within this step.
    const double max_dz = spec.cruise_speed * dt * std::sin(climb_angle);
    if (std::abs(dz) < max_dz) pitch = std::asin(dz / (spec.cruise_speed * dt));
  }
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  Vec3 u{cp * std::sin(st.yaw), cp * std::cos(st.yaw), sp};
  st.pos = st.pos + u * (spec.cruise_speed * dt);
}

struct Segment {
  double length_km = 0.0;     // horizontal length of a straight leg
  bool turn = false;          // when set, rotate by turn_delta instead
  double turn_delta = 0.0;    // signed yaw change (rad)
  double target_alt = 0.0;    // km
  double climb_angle = 0.0;   // rad, magnitude of flight-path angle
};

inline Trajectory simulate(const PatternSpec& spec, const std::vector<Segment>& segments,
                           const FlightState& start, double base_rate = 1.0) {
  const double dt = 1.0 / base_rate;
  FlightState st = start;
  Trajectory traj;
  traj.points.push_back(st.pos);
  traj.timestamps.push_back(0.0);
  double t = 0.0;
  for (const auto& seg : segments) {
    if (seg.turn) {
      const double target = wrap_angle(st.yaw + seg.turn_delta);
      while (std::abs(wrap_angle(target - st.yaw)) > 1e-9) {
        sim_step(st, spec, dt, target, true, seg.target_alt, seg.climb_angle);
        t += dt;
        traj.points.push_back(st.pos);
        traj.timestamps.push_back(t);
      }
    } else {
      double remaining = seg.length_km;
      while (remaining > 1e-9) {
        sim_step(st, spec, dt, st.yaw, false, seg.target_alt, seg.climb_angle);
        t += dt;
        remaining -= spec.cruise_speed * dt;  // horizontal advance approximation
        traj.points.push_back(st.pos);
        traj.timestamps.push_back(t);
      }
    }
  }
  return traj;
}

constexpr double kClimbAngle = 0.09;    // ~5 deg climb-out
constexpr double kDescentAngle = 0.06;  // ~3.4 deg glide

// Builds the segment script for one maneuver. Maneuvers within a family share
// an exact prefix so branch points are well defined:
//   departures/full pattern share takeoff roll + upwind climb;
//   landing/go-around share the final approach down to short final.
inline std::pair<std::vector<Segment>, FlightState> maneuver_script(const PatternSpec& spec,
                                                                    Maneuver m) {
  const Vec3 dir = spec.runway_b - spec.runway_a;
  const double runway_yaw = std::atan2(dir.x, dir.y);
  const double runway_len = dir.norm();
  const double turn = spec.left_traffic ? -kPi / 2.0 : kPi / 2.0;
  const double alt = spec.pattern_altitude;

  std::vector<Segment> segs;
  FlightState start;
  switch (m) {
    case Maneuver::departure_straight:
    case Maneuver::departure_turn:
    case Maneuver::full_pattern: {
      start.pos = spec.runway_a;
      start.yaw = runway_yaw;
      // Ground roll, then climbing upwind leg (shared prefix).
      segs.push_back({runway_len, false, 0.0, 0.0, 0.0});
      segs.push_back({spec.leg_lengths[0], false, 0.0, alt, kClimbAngle});
      if (m == Maneuver::departure_straight) {
        segs.push_back({3.0 * spec.leg_lengths[0], false, 0.0, 3.0 * alt, kClimbAngle});
      } else {
        segs.push_back({0.0, true, turn, alt, kClimbAngle});
        if (m == Maneuver::departure_turn) {
          segs.push_back({3.0 * spec.leg_lengths[1], false, 0.0, 3.0 * alt, kClimbAngle});
        } else {  // full pattern: crosswind, downwind, base, final, touchdown
          segs.push_back({spec.leg_lengths[1], false, 0.0, alt, kClimbAngle});
          segs.push_back({0.0, true, turn, alt, 0.0});
          segs.push_back({spec.leg_lengths[2], false, 0.0, alt, 0.0});
          segs.push_back({0.0, true, turn, alt, 0.0});
          segs.push_back({spec.leg_lengths[3], false, 0.0, 0.7 * alt, kDescentAngle});
          segs.push_back({0.0, true, turn, 0.7 * alt, kDescentAngle});
          segs.push_back({spec.leg_lengths[4], false, 0.0, 0.0, kDescentAngle});
          // rollout; descent angle lets any residual altitude bleed to zero
          segs.push_back({runway_len, false, 0.0, 0.0, kDescentAngle});
        }
      }
      break;
    }
    case Maneuver::landing:
    case Maneuver::go_around: {
      // Final approach toward runway_a along the runway heading, descending
      // from pattern altitude; decision point at short final.
      const double final_len = spec.leg_lengths[4];
      const double short_final = 0.3 * final_len;
      Vec3 u{std::sin(runway_yaw), std::cos(runway_yaw), 0.0};
      start.pos = spec.runway_a - u * final_len;
      // glide-consistent approach altitude so the glide actually reaches the
      // threshold; pattern altitude caps it
      start.pos.z = std::min(alt, final_len * std::sin(kDescentAngle));
      start.yaw = runway_yaw;
      segs.push_back({final_len - short_final, false, 0.0, 0.0, kDescentAngle});
      if (m == Maneuver::landing) {
        segs.push_back({short_final, false, 0.0, 0.0, kDescentAngle});
        segs.push_back({runway_len, false, 0.0, 0.0, kDescentAngle});  // rollout to a stop
      } else {
        segs.push_back({short_final + runway_len + 2.0 * spec.leg_lengths[0], false, 0.0,
                        3.0 * alt, kClimbAngle});
      }
      break;
    }
  }
  return {std::move(segs), start};
}

inline Trajectory noiseless_path(const PatternSpec& spec, Maneuver m) {
  auto [segs, start] = maneuver_script(spec, m);
  return simulate(spec, segs, start);
}

}  // namespace detail

// Generates a 1 Hz trajectory for the requested maneuver, plus annotations of
// where other maneuvers sharing an identical prefix diverge. Noise is i.i.d.
// Gaussian per point with the spec's seed; generation is a pure function of
// (spec, maneuver, seed).
inline Scenario generate_scenario(const PatternSpec& spec, Maneuver maneuver) {
  spec.validate();
  Scenario scenario;
  scenario.maneuver = maneuver;
  scenario.trajectory = detail::noiseless_path(spec, maneuver);

  for (Maneuver other : kAllManeuvers) {
    if (other == maneuver) continue;
    Trajectory other_path = detail::noiseless_path(spec, other);
    const std::size_t n = std::min(scenario.trajectory.size(), other_path.size());
    std::size_t diverge = 0;
    while (diverge < n &&
           distance(scenario.trajectory.points[diverge], other_path.points[diverge]) < 1e-6) {
      ++diverge;
    }
    if (diverge > 1) {  // shared prefix exists
      scenario.branches.push_back({other, scenario.trajectory.timestamps[diverge - 1]});
    }
  }

  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (auto& p : scenario.trajectory.points) {
      p.x += noise(rng);
      p.y += noise(rng);
      p.z += noise(rng);
    }
  }
  return scenario;
}

struct LabeledSample {
  Sample sample;
  Maneuver label = Maneuver::full_pattern;
  bool ambiguous = false;
};

// Windows scenarios into samples carrying their true maneuver label. A sample
// is flagged ambiguous when another maneuver in the mix shares its history
// prefix exactly (noiseless geometry) while the futures diverge by more than
// 0.5 km at the horizon.
inline std::vector<LabeledSample> generate_dataset(const PatternSpec& spec,
                                                   std::size_t n_scenarios,
                                                   const std::vector<std::pair<Maneuver, double>>& mix,
                                                   const ExperimentSetting& setting) {
  spec.validate();
  double total = 0.0;
  for (const auto& [m, w] : mix) total += w;
  if (mix.empty() || std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("maneuver mix proportions must sum to 1");
  }

  // Noiseless reference paths, shared across scenarios.
  std::map<Maneuver, Trajectory> reference;
  for (const auto& [m, w] : mix) {
    if (w > 0.0 && !reference.count(m)) reference[m] = detail::noiseless_path(spec, m);
  }

  const double horizon_s = double(setting.t_f()) / setting.future_rate;
  const std::size_t step_h = detail::rate_divisor(setting.base_rate, setting.history_rate, "history");
  const std::size_t stride = std::max<std::size_t>(setting.stride, 1);

  auto at_time = [&](const Trajectory& tr, double t) {
    std::size_t idx = std::size_t(std::llround(t * setting.base_rate));
    return tr.points[std::min(idx, tr.size() - 1)];
  };

  std::vector<LabeledSample> out;
  std::mt19937_64 pick_rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<double> pick_weights;
  for (const auto& [m, p] : mix) pick_weights.push_back(p);
  std::discrete_distribution<int> pick(pick_weights.begin(), pick_weights.end());

  for (std::size_t i = 0; i < n_scenarios; ++i) {
    const Maneuver label = mix[pick(pick_rng)].first;
    PatternSpec scenario_spec = spec;
    scenario_spec.seed = spec.seed + i;  // per-scenario derived seed
    Scenario scenario = generate_scenario(scenario_spec, label);
    const Trajectory& ref = reference[label];

    std::size_t window_index = 0;
    for (auto& sample : window_samples(scenario.trajectory, setting, /*agent_id=*/0,
                                       /*scene_id=*/long(i))) {
      LabeledSample ls;
      ls.sample = std::move(sample);
      ls.label = label;

      // Anchor time within the scenario, from the window arithmetic.
      const double anchor_t =
          double(window_index * stride + (setting.t_h() - 1) * step_h) / setting.base_rate;
      const double end_t = anchor_t + horizon_s;
      const std::size_t anchor_idx = std::size_t(std::llround(anchor_t * setting.base_rate));
      for (const auto& [other, w_other] : mix) {
        if (other == label || w_other <= 0.0) continue;
        const Trajectory& oref = reference[other];
        if (anchor_idx >= oref.size() || anchor_idx >= ref.size()) continue;
        bool shared = true;
        for (std::size_t idx = 0; idx <= anchor_idx && shared; ++idx) {
          shared = distance(ref.points[idx], oref.points[idx]) < 1e-6;
        }
        if (shared && distance(at_time(ref, end_t), at_time(oref, end_t)) > 0.5) {
          ls.ambiguous = true;
          break;
        }
      }
      out.push_back(std::move(ls));
      ++window_index;
    }
  }
  return out;
}

}  // namespace ascent
