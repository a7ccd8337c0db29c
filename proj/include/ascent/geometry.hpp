#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "ascent/common.hpp"

namespace ascent {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  double horizontal_norm() const { return std::hypot(x, y); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

inline double horizontal_distance(const Vec3& a, const Vec3& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Wraps an angle to [-pi, pi]; the +pi boundary maps to +pi.
inline double wrap_angle(double a) {
  if (!std::isfinite(a)) throw NumericError("wrap_angle: non-finite input");
  double r = std::remainder(a, 2.0 * kPi);  // in [-pi, pi], -pi on odd multiples
  if (r <= -kPi) r = kPi;
  return r;
}

// Agent-centric coordinate frame: position plus the yaw/pitch heading that is
// rotated out during normalization. yaw 0 = heading +y, pitch 0 = level.
struct PoseFrame {
  Vec3 position;
  double yaw = 0.0;    // radians, [-pi, pi]
  double pitch = 0.0;  // radians, [-pi/2, pi/2]
};

// Ordered 3D positions (km) with strictly increasing, uniformly spaced
// timestamps (s).
struct Trajectory {
  std::vector<Vec3> points;
  std::vector<double> timestamps;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  double dt() const {
    if (timestamps.size() < 2) throw DataError("trajectory has no time spacing");
    return timestamps[1] - timestamps[0];
  }

  void validate(double tol = 1e-6) const {
    if (points.empty()) throw DataError("trajectory must contain at least one point");
    if (points.size() != timestamps.size()) throw DataError("trajectory points/timestamps length mismatch");
    if (timestamps.size() >= 2) {
      const double spacing = timestamps[1] - timestamps[0];
      if (spacing <= 0.0) throw DataError("trajectory timestamps must be strictly increasing");
      for (std::size_t i = 1; i < timestamps.size(); ++i) {
        const double d = timestamps[i] - timestamps[i - 1];
        if (std::abs(d - spacing) > tol) throw DataError("trajectory timestamps must be uniformly spaced");
      }
    }
  }
};

// Heading from the displacement between the last two points: yaw = atan2(dx,
// dy), pitch = atan2(dz, |d_horizontal|). Near-zero displacements fall back to
// the most recent one with norm >= 1e-9 km; fully stationary histories report
// (0, 0).
inline std::pair<double, double> estimate_heading(const Trajectory& history) {
  if (history.size() < 2) {
    throw DataError("estimate_heading: need at least 2 history points, got " +
                    std::to_string(history.size()));
  }
  for (std::size_t i = history.size() - 1; i >= 1; --i) {
    const Vec3 d = history.points[i] - history.points[i - 1];
    if (d.norm() >= 1e-9) {
      return {std::atan2(d.x, d.y), std::atan2(d.z, d.horizontal_norm())};
    }
  }
  return {0.0, 0.0};
}

// Rotation into the agent frame: yaw about the vertical axis, then pitch
// about the lateral (x) axis. Maps the heading direction onto +y.
inline Vec3 rotate_to_local(const Vec3& p, double yaw, double pitch) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double x1 = p.x * cy - p.y * sy;
  const double y1 = p.x * sy + p.y * cy;
  const double z1 = p.z;
  return {x1, y1 * cp + z1 * sp, -y1 * sp + z1 * cp};
}

inline Vec3 rotate_to_global(const Vec3& p, double yaw, double pitch) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double y1 = p.y * cp - p.z * sp;
  const double z1 = p.y * sp + p.z * cp;
  return {p.x * cy + y1 * sy, -p.x * sy + y1 * cy, z1};
}

inline Vec3 to_local(const Vec3& p, const PoseFrame& frame) {
  return rotate_to_local(p - frame.position, frame.yaw, frame.pitch);
}

inline Vec3 to_global(const Vec3& p, const PoseFrame& frame) {
  return rotate_to_global(p, frame.yaw, frame.pitch) + frame.position;
}

// Positional + angular normalization: translate by -p_last, cancel yaw, then
// cancel pitch. The last point maps to the origin and the final displacement
// to (0, d, 0).
inline std::pair<Trajectory, PoseFrame> normalize_history(const Trajectory& history) {
  auto [yaw, pitch] = estimate_heading(history);
  PoseFrame frame{history.points.back(), yaw, pitch};
  Trajectory local;
  local.timestamps = history.timestamps;
  local.points.reserve(history.size());
  for (const auto& p : history.points) local.points.push_back(to_local(p, frame));
  return {std::move(local), frame};
}

inline std::vector<Vec3> denormalize_trajectory(const std::vector<Vec3>& local,
                                                const PoseFrame& frame) {
  std::vector<Vec3> out;
  out.reserve(local.size());
  for (const auto& p : local) out.push_back(to_global(p, frame));
  return out;
}

}  // namespace ascent
