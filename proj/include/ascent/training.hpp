#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ascent/model.hpp"

namespace ascent {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 0.001;
  std::vector<std::size_t> lr_milestones = {10, 15};  // lr halves at each
  double beta_smooth_l1 = 1.0;                        // km
  double w_regression = 1.0;
  double w_classification = 1.0;
  double grad_clip_norm = 5.0;  // 0 disables
  std::uint64_t seed = 0;
  bool wta_use_fde = false;  // select winner by endpoint distance instead

  void validate() const {
    if (lr <= 0.0 || batch_size == 0 || epochs == 0) {
      throw ConfigError("training: lr, batch_size and epochs must be positive");
    }
    for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
      if (lr_milestones[i] >= epochs || (i > 0 && lr_milestones[i] <= lr_milestones[i - 1])) {
        throw ConfigError("training: lr milestones must be strictly increasing and < epochs");
      }
    }
  }

  double lr_at_epoch(std::size_t epoch) const {
    double v = lr;
    for (auto m : lr_milestones) {
      if (epoch >= m) v *= 0.5;
    }
    return v;
  }
};

namespace detail {

inline double mean_l2(const Tensor& pred_positions, const std::vector<Vec3>& gt) {
  double total = 0.0;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    const double dx = pred_positions[t * 3] - gt[t].x;
    const double dy = pred_positions[t * 3 + 1] - gt[t].y;
    const double dz = pred_positions[t * 3 + 2] - gt[t].z;
    total += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return total / double(gt.size());
}

inline double endpoint_l2(const Tensor& pred_positions, const std::vector<Vec3>& gt) {
  const std::size_t t = gt.size() - 1;
  const double dx = pred_positions[t * 3] - gt[t].x;
  const double dy = pred_positions[t * 3 + 1] - gt[t].y;
  const double dz = pred_positions[t * 3 + 2] - gt[t].z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace detail

// Winner-takes-all selection: the mode with the lowest mean per-step L2
// distance to the ground truth (local frame); ties go to the lowest index.
inline std::size_t wta_select(const std::vector<Tensor>& local_modes, const std::vector<Vec3>& gt_local,
                              bool use_fde = false) {
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < local_modes.size(); ++i) {
    const double d = use_fde ? detail::endpoint_l2(local_modes[i], gt_local)
                             : detail::mean_l2(local_modes[i], gt_local);
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return best;
}

// Combined WTA loss: smooth L1 on the selected mode's local-frame positions
// plus cross-entropy driving the score head toward the winner. Gradients
// reach only the selected mode's trajectory plus all logits.
inline Tensor wta_loss(const AscentModel::ForwardGraph& fg, const std::vector<Vec3>& gt_local,
                       std::size_t best_index, const TrainConfig& cfg) {
  const std::size_t t_f = gt_local.size();
  std::vector<double> gt_data;
  gt_data.reserve(t_f * 3);
  for (const auto& p : gt_local) gt_data.insert(gt_data.end(), {p.x, p.y, p.z});
  Tensor target = Tensor::from({t_f, 3}, std::move(gt_data));
  Tensor regression = smooth_l1(fg.local_positions[best_index], target, cfg.beta_smooth_l1);
  Tensor classification = cross_entropy(fg.logits, best_index);
  return add(scale(regression, cfg.w_regression), scale(classification, cfg.w_classification));
}

// Ground-truth future mapped into the model's output frame.
inline std::vector<Vec3> future_to_local(const Sample& sample, const PoseFrame& frame) {
  std::vector<Vec3> out;
  out.reserve(sample.future.size());
  for (const auto& p : sample.future.points) out.push_back(to_local(p, frame));
  return out;
}

// Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::map<std::string, Tensor>& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (const auto& [name, p] : params) {
      Tensor param = p;
      if (!param.has_grad()) continue;
      auto& state = state_[name];
      if (state.m.size() != param.size()) {
        state.m.assign(param.size(), 0.0);
        state.v.assign(param.size(), 0.0);
      }
      const auto& g = param.grad();
      auto& data = param.data();
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (g[i] != g[i]) throw NumericError("Adam: NaN gradient in " + name);
        state.m[i] = beta1_ * state.m[i] + (1.0 - beta1_) * g[i];
        state.v[i] = beta2_ * state.v[i] + (1.0 - beta2_) * g[i] * g[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  std::uint64_t steps_taken() const { return t_; }

 private:
  struct State {
    std::vector<double> m, v;
  };
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::map<std::string, State> state_;
};

// Scales all gradients so the global norm does not exceed max_norm.
inline double clip_gradients(const std::map<std::string, Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& [name, p] : params) {
      Tensor param = p;
      if (!param.has_grad()) continue;
      for (auto& g : param.mutable_grad()) g *= s;
    }
  }
  return norm;
}

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  std::vector<double> mode_shares;  // winner-selection share per mode
  std::optional<double> val_minade;
  std::optional<double> val_minfde;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  double best_val_minfde = std::numeric_limits<double>::infinity();

  std::string metrics_jsonl() const;
};

namespace detail {

inline double param_norm(const std::map<std::string, Tensor>& params) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    for (double v : p.data()) sq += v * v;
  }
  return std::sqrt(sq);
}

inline void zero_all_grads(const std::map<std::string, Tensor>& params) {
  for (const auto& [name, p] : params) {
    Tensor t = p;
    t.zero_grad();
  }
}

// minADE/minFDE of the raw model over samples, for validation tracking.
inline std::pair<double, double> quick_eval(const AscentModel& model,
                                            const std::vector<Sample>& samples) {
  NoGradGuard ng;
  double ade = 0.0, fde = 0.0;
  for (const auto& s : samples) {
    ModePrediction pred = model.predict(s.history);
    double best_ade = std::numeric_limits<double>::infinity();
    double best_fde = std::numeric_limits<double>::infinity();
    for (const auto& mode : pred.trajectories) {
      double a = 0.0;
      for (std::size_t t = 0; t < mode.size(); ++t) a += distance(mode[t], s.future.points[t]);
      a /= double(mode.size());
      best_ade = std::min(best_ade, a);
      best_fde = std::min(best_fde, distance(mode.back(), s.future.points.back()));
    }
    ade += best_ade;
    fde += best_fde;
  }
  return {ade / double(samples.size()), fde / double(samples.size())};
}

}  // namespace detail

// Winner-takes-all training: seeded shuffling, milestone lr halving,
// per-epoch loss/mode-share logging and optional validation metrics.
// Single-threaded and bit-deterministic for a fixed seed.
inline TrainResult train(AscentModel& model, const std::vector<Sample>& dataset,
                         const TrainConfig& cfg, const std::vector<Sample>* validation = nullptr,
                         const std::string& best_checkpoint_path = "") {
  cfg.validate();
  if (dataset.empty()) throw DataError("train: empty dataset");

  AdamOptimizer opt;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at_epoch(epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t n_losses = 0;
    std::vector<std::size_t> winner_counts(model.config().k, 0);

    for (std::size_t batch_start = 0; batch_start < order.size();
         batch_start += cfg.batch_size) {
      const std::size_t batch_end = std::min(batch_start + cfg.batch_size, order.size());
      detail::zero_all_grads(model.parameters());
      double batch_loss = 0.0;
      for (std::size_t j = batch_start; j < batch_end; ++j) {
        const Sample& sample = dataset[order[j]];
        auto fg = model.forward_graph(sample.history);
        const auto gt_local = future_to_local(sample, fg.frame);
        const std::size_t best = wta_select(fg.local_positions, gt_local, cfg.wta_use_fde);
        ++winner_counts[best];
        Tensor loss = scale(wta_loss(fg, gt_local, best, cfg), 1.0 / double(batch_end - batch_start));
        backward(loss);
        batch_loss += loss.value() * double(batch_end - batch_start);
      }
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "train: non-finite loss in epoch " << epoch << ", batch "
            << batch_start / cfg.batch_size << " (parameter norm "
            << detail::param_norm(model.parameters()) << ")";
        throw NumericError(msg.str());
      }
      clip_gradients(model.parameters(), cfg.grad_clip_norm);
      opt.step(model.parameters(), lr);
      loss_sum += batch_loss / double(batch_end - batch_start);
      ++n_losses;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / double(n_losses);
    stats.lr = lr;
    const double total_wins = double(dataset.size());
    for (auto c : winner_counts) stats.mode_shares.push_back(double(c) / total_wins);
    if (validation && !validation->empty()) {
      auto [ade, fde] = detail::quick_eval(model, *validation);
      stats.val_minade = ade;
      stats.val_minfde = fde;
      if (fde < result.best_val_minfde) {
        result.best_val_minfde = fde;
        if (!best_checkpoint_path.empty()) model.save(best_checkpoint_path);
      }
    }
    result.epochs.push_back(std::move(stats));
  }
  return result;
}

inline std::string TrainResult::metrics_jsonl() const {
  std::ostringstream out;
  out.precision(17);
  for (const auto& e : epochs) {
    out << "{\"epoch\":" << e.epoch << ",\"loss\":" << e.mean_loss << ",\"lr\":" << e.lr;
    out << ",\"mode_shares\":[";
    for (std::size_t i = 0; i < e.mode_shares.size(); ++i) {
      if (i) out << ",";
      out << e.mode_shares[i];
    }
    out << "]";
    if (e.val_minade) out << ",\"val_minade\":" << *e.val_minade;
    if (e.val_minfde) out << ",\"val_minfde\":" << *e.val_minfde;
    out << "}\n";
  }
  return out.str();
}

}  // namespace ascent
