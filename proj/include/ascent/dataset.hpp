#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ascent/geometry.hpp"

static_assert(std::endian::native == std::endian::little,
              "canonical dataset format is little-endian; big-endian hosts are unsupported");

namespace ascent {

struct RawRecord {
  long frame_index = 0;
  long agent_id = 0;
  Vec3 position;
};

// First five numeric columns of the processed scene files. TrajAir rows carry
// trailing wind columns which are ignored.
struct ColumnMap {
  int frame = 0;
  int agent = 1;
  int x = 2;
  int y = 3;
  int z = 4;

  int max_column() const { return std::max({frame, agent, x, y, z}); }
};

struct AgentTrajectory {
  long agent_id = 0;
  Trajectory trajectory;
};

struct SceneReadResult {
  std::vector<AgentTrajectory> trajectories;
  std::size_t skipped_rows = 0;
};

// One prediction instance. Timestamps are sample-relative: history ends at
// t = 0 and the future starts one output interval later.
struct Sample {
  Trajectory history;
  Trajectory future;
  long agent_id = 0;
  long scene_id = 0;
  double history_rate = 1.0;  // Hz
  double future_rate = 1.0;   // Hz
};

// One of the paper-protocol experiment configurations. Step counts derive
// from duration * rate unless explicitly overridden (0 = derive).
struct ExperimentSetting {
  std::string name = "custom";
  double history_seconds = 11.0;
  double history_rate = 1.0;  // Hz
  double future_seconds = 120.0;
  double future_rate = 0.1;  // Hz
  std::size_t k = 5;
  double base_rate = 1.0;  // Hz of the raw scene files
  std::size_t stride = 1;  // base steps between window starts
  std::size_t history_steps_override = 0;
  std::size_t future_steps_override = 0;

  std::size_t t_h() const {
    if (history_steps_override) return history_steps_override;
    auto n = std::size_t(std::llround(history_seconds * history_rate));
    return std::max<std::size_t>(n, 2);
  }
  std::size_t t_f() const {
    if (future_steps_override) return future_steps_override;
    auto n = std::size_t(std::llround(future_seconds * future_rate));
    return std::max<std::size_t>(n, 1);
  }
  double dt_out() const { return 1.0 / future_rate; }
};

inline ExperimentSetting trajair_11s_setting() {
  return {"trajair-11s", 11.0, 1.0, 120.0, 0.1, 5};
}

// 16 s history at 0.2 Hz: three 5-second steps plus the anchor point.
inline ExperimentSetting atp_16s_setting() {
  ExperimentSetting s{"atp-16s", 16.0, 0.2, 120.0, 0.2, 5};
  s.history_steps_override = 4;
  return s;
}

inline ExperimentSetting goodflight_40s_setting() {
  return {"goodflight-40s", 40.0, 1.0, 120.0, 0.1, 20};
}

inline std::optional<ExperimentSetting> named_setting(const std::string& name) {
  if (name == "trajair-11s") return trajair_11s_setting();
  if (name == "atp-16s") return atp_16s_setting();
  if (name == "goodflight-40s") return goodflight_40s_setting();
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Scene file reading
// ---------------------------------------------------------------------------

// Parses whitespace- or comma-delimited numeric rows into per-agent
// trajectories, ordered by frame index. Duplicate (frame, agent) rows keep the
// first occurrence; malformed rows are skipped and counted. Frame gaps split
// an agent's track into separate uniform trajectories.
inline SceneReadResult read_scene_file(const std::string& path, const ColumnMap& columns = {},
                                       double base_rate = 1.0) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene file: " + path);

  std::map<long, std::map<long, Vec3>> by_agent;  // agent -> frame -> position
  std::size_t skipped = 0;
  std::size_t valid = 0;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& c : line) {
      if (c == ',') c = ' ';
    }
    std::istringstream row(line);
    std::vector<double> fields;
    double v;
    while (row >> v) fields.push_back(v);
    if (fields.empty()) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) ++skipped;
      continue;  // blank line
    }
    if (int(fields.size()) <= columns.max_column() || !row.eof()) {
      ++skipped;
      continue;
    }
    Vec3 p{fields[columns.x], fields[columns.y], fields[columns.z]};
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      ++skipped;
      continue;
    }
    long frame = std::lround(fields[columns.frame]);
    long agent = std::lround(fields[columns.agent]);
    if (frame < 0) {
      ++skipped;
      continue;
    }
    auto [it, inserted] = by_agent[agent].emplace(frame, p);
    (void)it;
    if (inserted) ++valid;
  }
  if (valid == 0) throw DataError("scene file contains no valid rows: " + path);

  SceneReadResult result;
  result.skipped_rows = skipped;
  const double dt = 1.0 / base_rate;
  for (const auto& [agent, frames] : by_agent) {
    Trajectory current;
    long prev_frame = -2;
    auto flush = [&]() {
      if (!current.empty()) {
        result.trajectories.push_back({agent, std::move(current)});
        current = {};
      }
    };
    for (const auto& [frame, pos] : frames) {
      if (!current.empty() && frame != prev_frame + 1) flush();
      current.points.push_back(pos);
      current.timestamps.push_back(double(frame) * dt);
      prev_frame = frame;
    }
    flush();
  }
  return result;
}

// ---------------------------------------------------------------------------
// Airspace filtering
// ---------------------------------------------------------------------------

constexpr double kDefaultCeilingKm = 1.8288;  // 6000 ft MSL
constexpr double kDefaultRadiusKm = 5.0;

// Drops points above the altitude ceiling or farther than radius_km
// (horizontal distance) from both runway endpoints; survivors split into
// contiguous segments.
inline std::vector<Trajectory> filter_airspace(const Trajectory& traj, double ceiling_km,
                                               const std::pair<Vec3, Vec3>& runway_endpoints,
                                               double radius_km) {
  if (ceiling_km <= 0.0 || radius_km <= 0.0) {
    throw ConfigError("filter_airspace: ceiling and radius must be positive");
  }
  std::vector<Trajectory> segments;
  Trajectory current;
  auto flush = [&]() {
    if (!current.empty()) {
      segments.push_back(std::move(current));
      current = {};
    }
  };
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Vec3& p = traj.points[i];
    const bool keep = p.z <= ceiling_km &&
                      (horizontal_distance(p, runway_endpoints.first) <= radius_km ||
                       horizontal_distance(p, runway_endpoints.second) <= radius_km);
    if (keep) {
      current.points.push_back(p);
      current.timestamps.push_back(traj.timestamps[i]);
    } else {
      flush();
    }
  }
  flush();
  return segments;
}

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t rate_divisor(double base_rate, double rate, const char* what) {
  const double ratio = base_rate / rate;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9) {
    throw ConfigError(std::string(what) + " rate " + std::to_string(rate) +
                      " Hz is not an integer divisor of the base rate " +
                      std::to_string(base_rate) + " Hz");
  }
  return std::size_t(rounded);
}

}  // namespace detail

// Slides (history, future) windows over a gap-free base-rate trajectory.
// History/future are integer subsamples of the base rate; incomplete windows
// are dropped. For a gap-free trajectory of N points the count is
// max(0, N - span + 1) at stride 1.
inline std::vector<Sample> window_samples(const Trajectory& traj, const ExperimentSetting& setting,
                                          long agent_id = 0, long scene_id = 0) {
  const std::size_t t_h = setting.t_h();
  const std::size_t t_f = setting.t_f();
  const std::size_t step_h = detail::rate_divisor(setting.base_rate, setting.history_rate, "history");
  const std::size_t step_f = detail::rate_divisor(setting.base_rate, setting.future_rate, "future");
  const std::size_t span = (t_h - 1) * step_h + t_f * step_f + 1;

  std::vector<Sample> samples;
  if (traj.size() < span) return samples;
  traj.validate();

  const double dt_h = double(step_h) / setting.base_rate;
  const double dt_f = double(step_f) / setting.base_rate;
  const std::size_t stride = std::max<std::size_t>(setting.stride, 1);
  for (std::size_t start = 0; start + span <= traj.size(); start += stride) {
    const std::size_t anchor = start + (t_h - 1) * step_h;
    Sample s;
    s.agent_id = agent_id;
    s.scene_id = scene_id;
    s.history_rate = setting.history_rate;
    s.future_rate = setting.future_rate;
    for (std::size_t i = 0; i < t_h; ++i) {
      s.history.points.push_back(traj.points[start + i * step_h]);
      s.history.timestamps.push_back(-double(t_h - 1 - i) * dt_h);
    }
    for (std::size_t j = 1; j <= t_f; ++j) {
      s.future.points.push_back(traj.points[anchor + j * step_f]);
      s.future.timestamps.push_back(double(j) * dt_f);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

// ---------------------------------------------------------------------------
// TartanAviation splits
// ---------------------------------------------------------------------------

// S1 = first 25% + last 25% of the (lexicographically ordered) files,
// S2 = middle 50%; boundaries at floor(n/4) and n - floor(n/4).
inline std::pair<std::vector<std::string>, std::vector<std::string>> make_tartan_splits(
    std::vector<std::string> files) {
  if (files.empty()) throw DataError("make_tartan_splits: empty file list");
  std::sort(files.begin(), files.end());
  const std::size_t n = files.size();
  const std::size_t q = n / 4;
  std::vector<std::string> s1, s2;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < q || i >= n - q) {
      s1.push_back(files[i]);
    } else {
      s2.push_back(files[i]);
    }
  }
  return {std::move(s1), std::move(s2)};
}

// ---------------------------------------------------------------------------
// Canonical dataset container ("ASCD", little-endian)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("unexpected end of file");
  return v;
}

}  // namespace detail

constexpr std::uint32_t kDatasetFormatVersion = 1;

inline void write_canonical_dataset(const std::vector<Sample>& samples, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open dataset file for writing: " + path);
  out.write("ASCD", 4);
  detail::write_pod(out, kDatasetFormatVersion);
  detail::write_pod(out, std::uint64_t(samples.size()));
  for (const auto& s : samples) {
    detail::write_pod(out, std::int64_t(s.scene_id));
    detail::write_pod(out, std::int64_t(s.agent_id));
    detail::write_pod(out, std::uint32_t(s.history.size()));
    detail::write_pod(out, std::uint32_t(s.future.size()));
    detail::write_pod(out, s.history_rate);
    detail::write_pod(out, s.future_rate);
    for (const auto& p : s.history.points) {
      detail::write_pod(out, p.x);
      detail::write_pod(out, p.y);
      detail::write_pod(out, p.z);
    }
    for (const auto& p : s.future.points) {
      detail::write_pod(out, p.x);
      detail::write_pod(out, p.y);
      detail::write_pod(out, p.z);
    }
  }
  if (!out) throw IoError("failed writing dataset file: " + path);
}

inline std::vector<Sample> read_canonical_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "ASCD") {
    throw DataError("not a canonical dataset file (bad magic): " + path);
  }
  const auto version = detail::read_pod<std::uint32_t>(in);
  if (version != kDatasetFormatVersion) {
    throw DataError("unsupported dataset format version " + std::to_string(version) + " in " + path);
  }
  const auto count = detail::read_pod<std::uint64_t>(in);
  std::vector<Sample> samples;
  samples.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Sample s;
    s.scene_id = long(detail::read_pod<std::int64_t>(in));
    s.agent_id = long(detail::read_pod<std::int64_t>(in));
    const auto t_h = detail::read_pod<std::uint32_t>(in);
    const auto t_f = detail::read_pod<std::uint32_t>(in);
    s.history_rate = detail::read_pod<double>(in);
    s.future_rate = detail::read_pod<double>(in);
    for (std::uint32_t t = 0; t < t_h; ++t) {
      Vec3 p;
      p.x = detail::read_pod<double>(in);
      p.y = detail::read_pod<double>(in);
      p.z = detail::read_pod<double>(in);
      s.history.points.push_back(p);
      s.history.timestamps.push_back(-double(t_h - 1 - t) / s.history_rate);
    }
    for (std::uint32_t t = 0; t < t_f; ++t) {
      Vec3 p;
      p.x = detail::read_pod<double>(in);
      p.y = detail::read_pod<double>(in);
      p.z = detail::read_pod<double>(in);
      s.future.points.push_back(p);
      s.future.timestamps.push_back(double(t + 1) / s.future_rate);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace ascent
