#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ascent/geometry.hpp"
#include "ascent/ops.hpp"
#include "ascent/tensor.hpp"

namespace ascent {

// Per-step flight parameters over the prediction horizon. The (sin, cos)
// pairs are raw network outputs; rollout normalizes them before use.
struct FlightParams {
  std::vector<double> speed;      // km/s, length T_f
  std::vector<double> yaw_sin;    // length T_f
  std::vector<double> yaw_cos;
  std::vector<double> pitch_sin;
  std::vector<double> pitch_cos;

  std::size_t steps() const { return speed.size(); }

  double yaw_at(std::size_t t) const { return std::atan2(yaw_sin[t], yaw_cos[t]); }
  double pitch_at(std::size_t t) const { return std::atan2(pitch_sin[t], pitch_cos[t]); }
};

namespace detail {

// (s, c) -> unit pair; epsilon 1e-12 guards a zero-norm pair.
inline std::pair<Tensor, Tensor> normalize_pair(const Tensor& s, const Tensor& c) {
  Tensor norm = sqrt_op(add_scalar(add(mul(s, s), mul(c, c)), 1e-24));
  return {div(s, norm), div(c, norm)};
}

}  // namespace detail

// Integrates per-step flight parameters into local-frame positions [T_f x 3]:
// p_t = p_{t-1} + speed_t * dt * u_t with the unit direction
// u = (cos(pitch) sin(yaw), cos(pitch) cos(yaw), sin(pitch)).
// All inputs are 1-D tensors of length T_f; fully differentiable.
inline Tensor rollout(const Tensor& speed, const Tensor& yaw_sin, const Tensor& yaw_cos,
                      const Tensor& pitch_sin, const Tensor& pitch_cos, double dt) {
  if (dt <= 0.0) throw ConfigError("rollout: dt must be positive");
  const std::size_t t_f = speed.size();
  if (yaw_sin.size() != t_f || yaw_cos.size() != t_f || pitch_sin.size() != t_f ||
      pitch_cos.size() != t_f) {
    throw DimensionError("rollout: parameter arrays must share length T_f");
  }
  auto [sy, cy] = detail::normalize_pair(yaw_sin, yaw_cos);
  auto [sp, cp] = detail::normalize_pair(pitch_sin, pitch_cos);
  Tensor step = scale(speed, dt);
  Tensor dx = mul(step, mul(cp, sy));
  Tensor dy = mul(step, mul(cp, cy));
  Tensor dz = mul(step, sp);
  Tensor deltas = concat_cols({reshape(dx, {t_f, 1}), reshape(dy, {t_f, 1}), reshape(dz, {t_f, 1})});
  return cumsum0(deltas);
}

inline Tensor rollout(const FlightParams& params, double dt) {
  const std::size_t t_f = params.steps();
  return rollout(Tensor::from({t_f}, params.speed), Tensor::from({t_f}, params.yaw_sin),
                 Tensor::from({t_f}, params.yaw_cos), Tensor::from({t_f}, params.pitch_sin),
                 Tensor::from({t_f}, params.pitch_cos), dt);
}

inline std::vector<Vec3> rollout_positions(const FlightParams& params, double dt) {
  NoGradGuard ng;
  Tensor pos = rollout(params, dt);
  std::vector<Vec3> out(params.steps());
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t] = {pos[t * 3], pos[t * 3 + 1], pos[t * 3 + 2]};
  }
  return out;
}

// Constant Velocity baseline: extrapolates the last history displacement at
// the output sampling interval; deterministic, single-mode.
inline std::vector<Vec3> constant_velocity_forecast(const Trajectory& history, std::size_t t_f,
                                                    double dt_out) {
  if (history.size() < 2) {
    throw DataError("constant_velocity_forecast: need at least 2 history points");
  }
  if (dt_out <= 0.0) throw ConfigError("constant_velocity_forecast: dt_out must be positive");
  const double dt_hist = history.timestamps.back() - history.timestamps[history.size() - 2];
  const Vec3 vel = (history.points.back() - history.points[history.size() - 2]) * (1.0 / dt_hist);
  std::vector<Vec3> out(t_f);
  for (std::size_t t = 0; t < t_f; ++t) {
    out[t] = history.points.back() + vel * (dt_out * double(t + 1));
  }
  return out;
}

}  // namespace ascent
