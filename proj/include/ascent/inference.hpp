#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "ascent/model.hpp"

namespace ascent {

// Graph-free batched forward pass: all pointwise layers run as single GEMMs
// over the stacked rows of every aircraft in the batch; only the tiny TxT
// attention products and the rollouts loop per sample. Produces the same
// outputs as AscentModel::predict.
class BatchedInference {
 public:
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const Mat>;

  explicit BatchedInference(const AscentModel& model) : model_(model), cfg_(model.config()) {}

  std::vector<ModePrediction> predict(const std::vector<Trajectory>& histories) const {
    const std::size_t b = histories.size();
    const std::size_t t_h = cfg_.t_h, d = cfg_.d, k = cfg_.k, t_f = cfg_.t_f;
    if (b == 0) return {};

    // Stack encoder inputs and collect frames.
    std::vector<PoseFrame> frames(b), poses(b);
    Mat x(b * t_h, 3);
    for (std::size_t i = 0; i < b; ++i) {
      const Trajectory& hist = histories[i];
      frames[i] = model_.output_frame(hist);
      auto [yaw, pitch] = estimate_heading(hist);
      poses[i] = {hist.points.back(), yaw, pitch};
      Tensor enc = model_.encoder_input(hist);
      for (std::size_t t = 0; t < t_h; ++t) {
        x(Eigen::Index(i * t_h + t), 0) = enc[t * 3];
        x(Eigen::Index(i * t_h + t), 1) = enc[t * 3 + 1];
        x(Eigen::Index(i * t_h + t), 2) = enc[t * 3 + 2];
      }
    }

    // Input projection + temporal embedding (tiled per sample).
    Mat h = x * weight("embed.in.w");
    h.rowwise() += vec("embed.in.b");
    {
      Mat idx(t_h, 1);
      for (std::size_t t = 0; t < t_h; ++t) idx(Eigen::Index(t), 0) = double(t) / double(t_h);
      Mat time_tokens = idx * weight("embed.time.w");
      time_tokens.rowwise() += vec("embed.time.b");
      for (std::size_t i = 0; i < b; ++i) {
        h.middleRows(Eigen::Index(i * t_h), Eigen::Index(t_h)) += time_tokens;
      }
    }

    for (std::size_t blk = 0; blk < cfg_.n_blocks; ++blk) {
      const std::string p = "enc" + std::to_string(blk);
      Mat n1 = layer_norm_rows(h, p + ".ln1");
      Mat q = n1 * weight(p + ".q.w");
      q.rowwise() += vec(p + ".q.b");
      Mat kk = n1 * weight(p + ".k.w");
      kk.rowwise() += vec(p + ".k.b");
      Mat v = n1 * weight(p + ".v.w");
      v.rowwise() += vec(p + ".v.b");

      // Per-sample multi-head attention on the TxT blocks.
      Mat attn(b * t_h, d);
      const std::size_t dh = d / cfg_.n_heads;
      const double inv_sqrt = 1.0 / std::sqrt(double(dh));
      for (std::size_t i = 0; i < b; ++i) {
        const auto rows = Eigen::seqN(Eigen::Index(i * t_h), Eigen::Index(t_h));
        for (std::size_t head = 0; head < cfg_.n_heads; ++head) {
          const auto cols = Eigen::seqN(Eigen::Index(head * dh), Eigen::Index(dh));
          Mat scores = (q(rows, cols) * kk(rows, cols).transpose()) * inv_sqrt;
          for (Eigen::Index r = 0; r < scores.rows(); ++r) {
            const double mx = scores.row(r).maxCoeff();
            scores.row(r) = (scores.row(r).array() - mx).exp();
            scores.row(r) /= scores.row(r).sum();
          }
          attn(rows, cols) = scores * v(rows, cols);
        }
      }
      Mat proj = attn * weight(p + ".out.w");
      proj.rowwise() += vec(p + ".out.b");
      h += proj;

      Mat n2 = layer_norm_rows(h, p + ".ln2");
      Mat f1 = n2 * weight(p + ".ffn1.w");
      f1.rowwise() += vec(p + ".ffn1.b");
      f1 = f1.cwiseMax(0.0);
      Mat f2 = f1 * weight(p + ".ffn2.w");
      f2.rowwise() += vec(p + ".ffn2.b");
      h += f2;
    }

    // Max-pool over time, then fuse the pose embedding.
    Mat agent(b, d);
    for (std::size_t i = 0; i < b; ++i) {
      agent.row(Eigen::Index(i)) =
          h.middleRows(Eigen::Index(i * t_h), Eigen::Index(t_h)).colwise().maxCoeff();
    }
    if (cfg_.use_pose_embedding) {
      Mat pose_in(b, 7);
      for (std::size_t i = 0; i < b; ++i) {
        const auto& f = poses[i];
        pose_in.row(Eigen::Index(i)) << f.position.x / cfg_.pose_scale,
            f.position.y / cfg_.pose_scale, f.position.z / cfg_.pose_scale, std::sin(f.yaw),
            std::cos(f.yaw), std::sin(f.pitch), std::cos(f.pitch);
      }
      Mat p1 = pose_in * weight("pose.l1.w");
      p1.rowwise() += vec("pose.l1.b");
      p1 = p1.cwiseMax(0.0);
      Mat p2 = p1 * weight("pose.l2.w");
      p2.rowwise() += vec("pose.l2.b");
      agent += p2;
    }

    // Decoder: stack (sample, mode) rows and run the heads as single GEMMs.
    Mat dec(b * k, d);
    const ConstMap queries = weight("queries");
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t m = 0; m < k; ++m) {
        dec.row(Eigen::Index(i * k + m)) = agent.row(Eigen::Index(i)) + queries.row(Eigen::Index(m));
      }
    }
    Mat logits = head(dec, "head.score");
    Mat speed, yaw, pitch, xyz;
    if (cfg_.flight_params) {
      speed = head(dec, "head.speed");
      if (cfg_.softplus_speed) {
        speed = speed.unaryExpr(
            [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); });
      }
      yaw = head(dec, "head.yaw");
      pitch = head(dec, "head.pitch");
    } else {
      xyz = head(dec, "head.xyz");
    }

    // Rollout + denormalization + score softmax per sample.
    std::vector<ModePrediction> out(b);
    for (std::size_t i = 0; i < b; ++i) {
      ModePrediction& pred = out[i];
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < k; ++m) mx = std::max(mx, logits(Eigen::Index(i * k + m), 0));
      double sum = 0.0;
      for (std::size_t m = 0; m < k; ++m) {
        pred.scores.push_back(std::exp(logits(Eigen::Index(i * k + m), 0) - mx));
        sum += pred.scores.back();
      }
      for (auto& s : pred.scores) s /= sum;

      for (std::size_t m = 0; m < k; ++m) {
        const Eigen::Index row = Eigen::Index(i * k + m);
        std::vector<Vec3> local(t_f);
        if (cfg_.flight_params) {
          FlightParams fp;
          for (std::size_t t = 0; t < t_f; ++t) {
            fp.speed.push_back(speed(row, Eigen::Index(t)));
            fp.yaw_sin.push_back(yaw(row, Eigen::Index(t)));
            fp.yaw_cos.push_back(yaw(row, Eigen::Index(t_f + t)));
            fp.pitch_sin.push_back(pitch(row, Eigen::Index(t)));
            fp.pitch_cos.push_back(pitch(row, Eigen::Index(t_f + t)));
          }
          Vec3 pos{0.0, 0.0, 0.0};
          for (std::size_t t = 0; t < t_f; ++t) {
            const double ny = std::sqrt(fp.yaw_sin[t] * fp.yaw_sin[t] +
                                        fp.yaw_cos[t] * fp.yaw_cos[t] + 1e-24);
            const double np = std::sqrt(fp.pitch_sin[t] * fp.pitch_sin[t] +
                                        fp.pitch_cos[t] * fp.pitch_cos[t] + 1e-24);
            const double sy = fp.yaw_sin[t] / ny, cy = fp.yaw_cos[t] / ny;
            const double sp = fp.pitch_sin[t] / np, cp = fp.pitch_cos[t] / np;
            pos = pos + Vec3{cp * sy, cp * cy, sp} * (fp.speed[t] * cfg_.dt_out);
            local[t] = pos;
          }
          pred.params.push_back(std::move(fp));
        } else {
          for (std::size_t t = 0; t < t_f; ++t) {
            local[t] = {xyz(row, Eigen::Index(t * 3)), xyz(row, Eigen::Index(t * 3 + 1)),
                        xyz(row, Eigen::Index(t * 3 + 2))};
          }
        }
        pred.trajectories.push_back(denormalize_trajectory(local, frames[i]));
      }
    }
    return out;
  }

 private:
  ConstMap weight(const std::string& name) const {
    Tensor p = model_.param(name);
    const std::size_t rows = p.ndim() == 2 ? p.dim(0) : 1;
    const std::size_t cols = p.ndim() == 2 ? p.dim(1) : p.dim(0);
    return ConstMap(p.data().data(), Eigen::Index(rows), Eigen::Index(cols));
  }

  Eigen::Map<const Eigen::RowVectorXd> vec(const std::string& name) const {
    Tensor p = model_.param(name);
    return {p.data().data(), Eigen::Index(p.size())};
  }

  Mat layer_norm_rows(const Mat& x, const std::string& prefix) const {
    const auto g = vec(prefix + ".g");
    const auto bias = vec(prefix + ".b");
    Mat out(x.rows(), x.cols());
    const double n = double(x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double mean = x.row(r).mean();
      const double var = (x.row(r).array() - mean).square().sum() / n;
      const double inv = 1.0 / std::sqrt(var + 1e-5);
      out.row(r) = (((x.row(r).array() - mean) * inv) * g.array() + bias.array()).matrix();
    }
    return out;
  }

  Mat head(const Mat& x, const std::string& prefix) const {
    Mat h1 = x * weight(prefix + ".l1.w");
    h1.rowwise() += vec(prefix + ".l1.b");
    h1 = h1.cwiseMax(0.0);
    Mat h2 = h1 * weight(prefix + ".l2.w");
    h2.rowwise() += vec(prefix + ".l2.b");
    h2 = h2.cwiseMax(0.0);
    Mat h3 = h2 * weight(prefix + ".l3.w");
    h3.rowwise() += vec(prefix + ".l3.b");
    return h3;
  }

  const AscentModel& model_;
  ModelConfig cfg_;
};

}  // namespace ascent
