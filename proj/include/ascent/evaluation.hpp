#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ascent/dataset.hpp"
#include "ascent/geometry.hpp"
#include "ascent/inference.hpp"
#include "ascent/model.hpp"

namespace ascent {

// ---------------------------------------------------------------------------
// Displacement metrics
// ---------------------------------------------------------------------------

// Min over modes of the mean per-step Euclidean distance to the ground truth.
inline double min_ade(const std::vector<std::vector<Vec3>>& pred, const std::vector<Vec3>& gt) {
  if (gt.empty()) throw DimensionError("min_ade: empty ground truth");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& mode : pred) {
    if (mode.size() != gt.size()) throw DimensionError("min_ade: mode/gt length mismatch");
    double total = 0.0;
    for (std::size_t t = 0; t < gt.size(); ++t) total += distance(mode[t], gt[t]);
    best = std::min(best, total / double(gt.size()));
  }
  return best;
}

// Min over modes of the endpoint distance.
inline double min_fde(const std::vector<std::vector<Vec3>>& pred, const std::vector<Vec3>& gt) {
  if (gt.empty()) throw DimensionError("min_fde: empty ground truth");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& mode : pred) {
    if (mode.size() != gt.size()) throw DimensionError("min_fde: mode/gt length mismatch");
    best = std::min(best, distance(mode.back(), gt.back()));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Nearest Neighbor baseline
// ---------------------------------------------------------------------------

// Retrieval bank over (normalized history, local future) pairs. Matching on
// normalized histories makes the baseline translation/heading-invariant; the
// raw-coordinate variant is retained behind a flag.
class NearestNeighborBank {
 public:
  explicit NearestNeighborBank(const std::vector<Sample>& train_samples, bool normalized = true)
      : normalized_(normalized) {
    if (train_samples.empty()) throw DataError("nearest neighbor: empty training bank");
    for (const auto& s : train_samples) {
      Entry e;
      if (normalized_) {
        auto [local, frame] = normalize_history(s.history);
        e.history = std::move(local.points);
        for (const auto& p : s.future.points) e.future.push_back(to_local(p, frame));
      } else {
        e.history = s.history.points;
        e.future = s.future.points;
      }
      bank_.push_back(std::move(e));
    }
  }

  std::vector<Vec3> forecast(const Trajectory& history) const {
    PoseFrame frame;
    std::vector<Vec3> query;
    if (normalized_) {
      auto [local, f] = normalize_history(history);
      frame = f;
      query = std::move(local.points);
    } else {
      query = history.points;
    }
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < bank_.size(); ++i) {
      if (bank_[i].history.size() != query.size()) continue;
      double total = 0.0;
      for (std::size_t t = 0; t < query.size(); ++t) total += distance(bank_[i].history[t], query[t]);
      const double mean = total / double(query.size());
      if (mean < best_dist) {  // ties keep the first bank entry
        best_dist = mean;
        best = i;
      }
    }
    if (!std::isfinite(best_dist)) throw DataError("nearest neighbor: no bank entry matches T_h");
    if (normalized_) return denormalize_trajectory(bank_[best].future, frame);
    // Raw matching: emit the neighbor's future shifted to the query endpoint.
    const Vec3 shift = history.points.back() - bank_[best].history.back();
    std::vector<Vec3> out;
    for (const auto& p : bank_[best].future) out.push_back(p + shift);
    return out;
  }

 private:
  struct Entry {
    std::vector<Vec3> history;
    std::vector<Vec3> future;
  };
  std::vector<Entry> bank_;
  bool normalized_;
};

// ---------------------------------------------------------------------------
// Dataset-level evaluation
// ---------------------------------------------------------------------------

struct EvalReport {
  double minade = 0.0;
  double minfde = 0.0;
  std::size_t n_samples = 0;
  std::string setting;
  struct PerSample {
    long scene_id;
    long agent_id;
    std::size_t best_mode;
    double ade;
    double fde;
  };
  std::vector<PerSample> per_sample;

  std::string to_json() const {
    std::ostringstream out;
    out.precision(12);
    out << "{\"setting\":\"" << setting << "\",\"n_samples\":" << n_samples
        << ",\"minade\":" << minade << ",\"minfde\":" << minfde << "}";
    return out.str();
  }
};

using Predictor = std::function<ModePrediction(const Sample&)>;

// Wraps a single-mode baseline: its forecast is replicated to k modes so
// minADE_k/minFDE_k are comparable with multi-modal models.
inline Predictor replicate_single_mode(std::function<std::vector<Vec3>(const Sample&)> forecast,
                                       std::size_t k) {
  return [forecast = std::move(forecast), k](const Sample& s) {
    ModePrediction pred;
    std::vector<Vec3> traj = forecast(s);
    for (std::size_t i = 0; i < k; ++i) pred.trajectories.push_back(traj);
    pred.scores.assign(k, 1.0 / double(k));
    return pred;
  };
}

inline Predictor model_predictor(const AscentModel& model) {
  return [&model](const Sample& s) { return model.predict(s.history); };
}

inline EvalReport evaluate(const Predictor& predictor, const std::vector<Sample>& dataset,
                           const std::string& setting_name = "", bool keep_per_sample = false) {
  if (dataset.empty()) throw DataError("evaluate: empty dataset");
  EvalReport report;
  report.setting = setting_name;
  report.n_samples = dataset.size();
  for (const auto& s : dataset) {
    ModePrediction pred = predictor(s);
    const double ade = min_ade(pred.trajectories, s.future.points);
    const double fde = min_fde(pred.trajectories, s.future.points);
    report.minade += ade;
    report.minfde += fde;
    if (keep_per_sample) {
      std::size_t best = 0;
      double best_fde = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < pred.trajectories.size(); ++i) {
        const double f = distance(pred.trajectories[i].back(), s.future.points.back());
        if (f < best_fde) {
          best_fde = f;
          best = i;
        }
      }
      report.per_sample.push_back({s.scene_id, s.agent_id, best, ade, fde});
    }
  }
  report.minade /= double(dataset.size());
  report.minfde /= double(dataset.size());
  return report;
}

// Cross-dataset protocol: optionally drop samples whose history or future
// leaves the recording radius (horizontal distance from both runway
// endpoints), then evaluate as usual.
inline EvalReport cross_dataset_eval(const Predictor& predictor, const std::vector<Sample>& dataset,
                                     std::optional<double> radius_filter_km,
                                     const std::pair<Vec3, Vec3>& runway_endpoints,
                                     const std::string& setting_name = "") {
  if (!radius_filter_km) return evaluate(predictor, dataset, setting_name);
  std::vector<Sample> kept;
  for (const auto& s : dataset) {
    bool inside = true;
    auto check = [&](const std::vector<Vec3>& pts) {
      for (const auto& p : pts) {
        if (horizontal_distance(p, runway_endpoints.first) > *radius_filter_km &&
            horizontal_distance(p, runway_endpoints.second) > *radius_filter_km) {
          inside = false;
          return;
        }
      }
    };
    check(s.history.points);
    if (inside) check(s.future.points);
    if (inside) kept.push_back(s);
  }
  return evaluate(predictor, kept, setting_name);
}

// ---------------------------------------------------------------------------
// Latency benchmarking
// ---------------------------------------------------------------------------

struct LatencyRow {
  std::size_t batch_size;
  double median_ms;
  double p90_ms;
};

inline std::string latency_csv(const std::vector<LatencyRow>& rows) {
  std::ostringstream out;
  out << "batch_size,median_ms,p90_ms\n";
  for (const auto& r : rows) {
    out << r.batch_size << "," << r.median_ms << "," << r.p90_ms << "\n";
  }
  return out.str();
}

// Times batched forward passes on random inputs; single-threaded timing loop,
// medians over n_trials after n_warmup discarded passes.
inline std::vector<LatencyRow> latency_bench(const AscentModel& model,
                                             const std::vector<std::size_t>& batch_sizes = {1, 4, 8,
                                                                                            16, 32},
                                             std::size_t n_warmup = 3, std::size_t n_trials = 20,
                                             std::uint64_t seed = 0) {
  if (n_trials == 0) throw ConfigError("latency_bench: n_trials must be positive");
  BatchedInference engine(model);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-4.0, 4.0);
  std::uniform_real_distribution<double> vel(-0.05, 0.05);
  const std::size_t t_h = model.config().t_h;

  auto random_history = [&]() {
    Trajectory traj;
    Vec3 p{pos(rng), pos(rng), 0.5 + 0.1 * pos(rng)};
    Vec3 v{vel(rng), vel(rng), vel(rng) * 0.1};
    for (std::size_t t = 0; t < t_h; ++t) {
      traj.points.push_back(p + v * double(t));
      traj.timestamps.push_back(double(t));
    }
    return traj;
  };

  std::vector<LatencyRow> rows;
  for (std::size_t batch : batch_sizes) {
    std::vector<Trajectory> histories;
    for (std::size_t i = 0; i < batch; ++i) histories.push_back(random_history());
    for (std::size_t w = 0; w < n_warmup; ++w) (void)engine.predict(histories);
    std::vector<double> times_ms;
    times_ms.reserve(n_trials);
    for (std::size_t trial = 0; trial < n_trials; ++trial) {
      const auto start = std::chrono::steady_clock::now();
      volatile double sink = engine.predict(histories)[0].scores[0];
      (void)sink;
      const auto end = std::chrono::steady_clock::now();
      times_ms.push_back(std::chrono::duration<double, std::milli>(end - start).count());
    }
    std::sort(times_ms.begin(), times_ms.end());
    const double median = times_ms[times_ms.size() / 2];
    const double p90 = times_ms[std::min(times_ms.size() - 1,
                                         std::size_t(std::ceil(0.9 * double(times_ms.size()))) )];
    rows.push_back({batch, median, p90});
  }
  return rows;
}

}  // namespace ascent
