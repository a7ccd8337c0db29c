#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ascent/dataset.hpp"
#include "ascent/geometry.hpp"
#include "ascent/kinematics.hpp"
#include "ascent/ops.hpp"
#include "ascent/tensor.hpp"

namespace ascent {

struct ModelConfig {
  std::size_t d = 128;       // feature width
  std::size_t n_blocks = 2;  // self-attention blocks
  std::size_t n_heads = 8;
  std::size_t k = 5;   // prediction modes
  std::size_t t_h = 11;
  std::size_t t_f = 12;
  double dt_out = 10.0;      // seconds per future step
  double pose_scale = 10.0;  // km divisor for pose-embedding positions

  // Ablation switches (Table-IV-style variants).
  bool positional_normalization = true;
  bool angular_normalization = true;
  bool use_pose_embedding = true;
  bool flight_params = true;   // false: direct xyz position head
  bool softplus_speed = true;  // false: strictly linear speed head

  void validate() const {
    if (d == 0 || n_heads == 0 || d % n_heads != 0) {
      throw ConfigError("model: D must be positive and divisible by n_heads");
    }
    if (k < 1 || t_h < 2 || t_f < 1) {
      throw ConfigError("model: require k >= 1, T_h >= 2, T_f >= 1");
    }
    if (dt_out <= 0.0 || pose_scale <= 0.0) {
      throw ConfigError("model: dt_out and pose_scale must be positive");
    }
  }
};

// k candidate futures with probability scores; flight parameters retained for
// inspection when the parameterized decoder is active.
struct ModePrediction {
  std::vector<std::vector<Vec3>> trajectories;  // k x T_f, global frame, km
  std::vector<double> scores;                   // sum to 1
  std::vector<FlightParams> params;             // empty in direct-xyz mode
};

class AscentModel {
 public:
  explicit AscentModel(ModelConfig config, std::uint64_t init_seed = 0)
      : cfg_(config) {
    cfg_.validate();
    std::mt19937_64 rng(init_seed);
    build_parameters(rng);
  }

  const ModelConfig& config() const { return cfg_; }

  Tensor param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  const std::map<std::string, Tensor>& parameters() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.size();
    return n;
  }

  // Closed-form parameter count from the architecture, for the
  // lightweight-model check against the actual store.
  static std::size_t expected_parameter_count(const ModelConfig& cfg) {
    const std::size_t d = cfg.d, h = 2 * cfg.d;
    auto linear = [](std::size_t in, std::size_t out) { return in * out + out; };
    std::size_t n = linear(3, d) + linear(1, d);  // input + temporal embedding
    n += cfg.n_blocks * (4 * d                    // two layer norms (gain+bias)
                         + 4 * linear(d, d)       // q, k, v, attention output
                         + linear(d, h) + linear(h, d));  // feed-forward
    if (cfg.use_pose_embedding) n += linear(7, d) + linear(d, d);
    n += cfg.k * d;  // mode queries
    auto head = [&](std::size_t out) { return linear(d, h) + linear(h, h) + linear(h, out); };
    if (cfg.flight_params) {
      n += head(cfg.t_f) + 2 * head(2 * cfg.t_f);  // speed, yaw, pitch
    } else {
      n += head(3 * cfg.t_f);
    }
    n += head(1);  // score
    return n;
  }

  // -------------------------------------------------------------------------
  // Forward pieces
  // -------------------------------------------------------------------------

  // Linear 3->D projection of the (normalized) history, plus a temporal
  // embedding of the scalar index t/T_h, then pre-norm self-attention blocks
  // and max-pooling over time.
  Tensor encode_motion(const Tensor& local_history) const {
    if (local_history.ndim() != 2 || local_history.dim(0) != cfg_.t_h ||
        local_history.dim(1) != 3) {
      throw DimensionError("encode_motion: expected [" + std::to_string(cfg_.t_h) +
                           "x3] history, got " + shape_str(local_history.shape()));
    }
    Tensor tokens = add(matmul(local_history, param("embed.in.w")), param("embed.in.b"));
    std::vector<double> idx(cfg_.t_h);
    for (std::size_t t = 0; t < cfg_.t_h; ++t) idx[t] = double(t) / double(cfg_.t_h);
    Tensor time_tokens =
        add(matmul(Tensor::from({cfg_.t_h, 1}, idx), param("embed.time.w")), param("embed.time.b"));
    Tensor x = add(tokens, time_tokens);
    for (std::size_t b = 0; b < cfg_.n_blocks; ++b) x = encoder_block(x, b);
    return max_pool_time(x);
  }

  // Pose input (x/s, y/s, z/s, sin yaw, cos yaw, sin pitch, cos pitch)
  // through a two-layer MLP.
  Tensor pose_embedding(const PoseFrame& frame) const {
    return pose_embedding(pose_input(frame));
  }

  Tensor pose_embedding(const Tensor& input) const {
    Tensor h = relu(add(matmul(input, param("pose.l1.w")), param("pose.l1.b")));
    Tensor out = add(matmul(h, param("pose.l2.w")), param("pose.l2.b"));
    return reshape(out, {cfg_.d});
  }

  Tensor pose_input(const PoseFrame& frame) const {
    const double s = cfg_.pose_scale;
    return Tensor::from({1, 7}, {frame.position.x / s, frame.position.y / s, frame.position.z / s,
                                 std::sin(frame.yaw), std::cos(frame.yaw), std::sin(frame.pitch),
                                 std::cos(frame.pitch)});
  }

  struct DecodeResult {
    // Raw per-mode head outputs; rows are modes.
    Tensor speed;      // [k x T_f]      (flight_params)
    Tensor yaw;        // [k x 2T_f]
    Tensor pitch;      // [k x 2T_f]
    Tensor positions;  // [k x 3T_f]     (direct xyz)
    Tensor logits;     // [k]
  };

  // Broadcast A to k rows, add the learnable mode queries, and run the four
  // 3-layer MLP heads.
  DecodeResult decode(const Tensor& agent_feature) const {
    if (agent_feature.size() != cfg_.d) {
      throw DimensionError("decode: expected D-vector, got " + shape_str(agent_feature.shape()));
    }
    Tensor x = add(param("queries"), reshape(agent_feature, {1, cfg_.d}));
    DecodeResult r;
    if (cfg_.flight_params) {
      r.speed = head(x, "head.speed");
      if (cfg_.softplus_speed) r.speed = softplus(r.speed);
      r.yaw = head(x, "head.yaw");
      r.pitch = head(x, "head.pitch");
    } else {
      r.positions = head(x, "head.xyz");
    }
    r.logits = reshape(head(x, "head.score"), {cfg_.k});
    return r;
  }

  // Output pose of the prediction frame: rollout is always anchored at the
  // current position; heading is rotated out only under angular
  // normalization.
  PoseFrame output_frame(const Trajectory& history) const {
    auto [yaw, pitch] = estimate_heading(history);
    PoseFrame frame{history.points.back(), yaw, pitch};
    if (!cfg_.angular_normalization || !cfg_.positional_normalization) {
      frame.yaw = 0.0;
      frame.pitch = 0.0;
    }
    return frame;
  }

  // Encoder input per the coordinate-modeling switches: translated under
  // positional normalization, rotated additionally under angular
  // normalization, raw global coordinates otherwise.
  Tensor encoder_input(const Trajectory& history) const {
    if (history.size() != cfg_.t_h) {
      throw DimensionError("history length " + std::to_string(history.size()) +
                           " does not match configured T_h = " + std::to_string(cfg_.t_h));
    }
    std::vector<double> data;
    data.reserve(cfg_.t_h * 3);
    if (cfg_.positional_normalization) {
      PoseFrame frame = output_frame(history);
      for (const auto& p : history.points) {
        Vec3 q = to_local(p, frame);
        data.insert(data.end(), {q.x, q.y, q.z});
      }
    } else {
      for (const auto& p : history.points) data.insert(data.end(), {p.x, p.y, p.z});
    }
    return Tensor::from({cfg_.t_h, 3}, std::move(data));
  }

  struct ForwardGraph {
    std::vector<Tensor> local_positions;  // k tensors of [T_f x 3], output frame
    Tensor logits;                        // [k]
    DecodeResult heads;
    PoseFrame frame;  // output frame (denormalization target)
  };

  // Full differentiable pipeline up to local-frame mode positions + logits.
  ForwardGraph forward_graph(const Trajectory& history) const {
    ForwardGraph fg;
    fg.frame = output_frame(history);
    Tensor motion = encode_motion(encoder_input(history));
    Tensor agent_feature = motion;
    if (cfg_.use_pose_embedding) {
      auto [yaw, pitch] = estimate_heading(history);
      PoseFrame pose{history.points.back(), yaw, pitch};
      agent_feature = add(motion, pose_embedding(pose));
    }
    fg.heads = decode(agent_feature);
    fg.logits = fg.heads.logits;
    fg.local_positions.reserve(cfg_.k);
    for (std::size_t i = 0; i < cfg_.k; ++i) {
      if (cfg_.flight_params) {
        Tensor speed = reshape(slice_rows(fg.heads.speed, i, 1), {cfg_.t_f});
        Tensor yaw_row = slice_rows(fg.heads.yaw, i, 1);
        Tensor pitch_row = slice_rows(fg.heads.pitch, i, 1);
        fg.local_positions.push_back(
            rollout(speed, reshape(slice_cols(yaw_row, 0, cfg_.t_f), {cfg_.t_f}),
                    reshape(slice_cols(yaw_row, cfg_.t_f, cfg_.t_f), {cfg_.t_f}),
                    reshape(slice_cols(pitch_row, 0, cfg_.t_f), {cfg_.t_f}),
                    reshape(slice_cols(pitch_row, cfg_.t_f, cfg_.t_f), {cfg_.t_f}), cfg_.dt_out));
      } else {
        fg.local_positions.push_back(
            reshape(slice_rows(fg.heads.positions, i, 1), {cfg_.t_f, 3}));
      }
    }
    return fg;
  }

  // Inference: forward, denormalize each mode into the global frame, softmax
  // the scores.
  ModePrediction predict(const Trajectory& history) const {
    NoGradGuard ng;
    ForwardGraph fg = forward_graph(history);
    ModePrediction pred;
    pred.trajectories.reserve(cfg_.k);
    Tensor scores = softmax(fg.logits, 0);
    for (std::size_t i = 0; i < cfg_.k; ++i) {
      const Tensor& local = fg.local_positions[i];
      std::vector<Vec3> pts(cfg_.t_f);
      for (std::size_t t = 0; t < cfg_.t_f; ++t) {
        pts[t] = {local[t * 3], local[t * 3 + 1], local[t * 3 + 2]};
      }
      pred.trajectories.push_back(denormalize_trajectory(pts, fg.frame));
      pred.scores.push_back(scores[i]);
      if (cfg_.flight_params) {
        FlightParams fp;
        for (std::size_t t = 0; t < cfg_.t_f; ++t) {
          fp.speed.push_back(fg.heads.speed[i * cfg_.t_f + t]);
          fp.yaw_sin.push_back(fg.heads.yaw[i * 2 * cfg_.t_f + t]);
          fp.yaw_cos.push_back(fg.heads.yaw[i * 2 * cfg_.t_f + cfg_.t_f + t]);
          fp.pitch_sin.push_back(fg.heads.pitch[i * 2 * cfg_.t_f + t]);
          fp.pitch_cos.push_back(fg.heads.pitch[i * 2 * cfg_.t_f + cfg_.t_f + t]);
        }
        pred.params.push_back(std::move(fp));
      }
    }
    return pred;
  }

  // -------------------------------------------------------------------------
  // Checkpoints ("ASCW", little-endian)
  // -------------------------------------------------------------------------

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write("ASCW", 4);
    detail::write_pod(out, std::uint32_t(1));  // version
    detail::write_pod(out, std::uint32_t(cfg_.d));
    detail::write_pod(out, std::uint32_t(cfg_.n_blocks));
    detail::write_pod(out, std::uint32_t(cfg_.n_heads));
    detail::write_pod(out, std::uint32_t(cfg_.k));
    detail::write_pod(out, std::uint32_t(cfg_.t_h));
    detail::write_pod(out, std::uint32_t(cfg_.t_f));
    detail::write_pod(out, cfg_.dt_out);
    detail::write_pod(out, cfg_.pose_scale);
    std::uint8_t flags = std::uint8_t((cfg_.positional_normalization << 0) |
                                      (cfg_.angular_normalization << 1) |
                                      (cfg_.use_pose_embedding << 2) | (cfg_.flight_params << 3) |
                                      (cfg_.softplus_speed << 4));
    detail::write_pod(out, flags);
    detail::write_pod(out, std::uint64_t(params_.size()));
    for (const auto& [name, p] : params_) {
      detail::write_pod(out, std::uint32_t(name.size()));
      out.write(name.data(), std::streamsize(name.size()));
      detail::write_pod(out, std::uint32_t(p.ndim()));
      for (auto d : p.shape()) detail::write_pod(out, std::uint64_t(d));
      out.write(reinterpret_cast<const char*>(p.data().data()),
                std::streamsize(p.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
  }

  static AscentModel load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "ASCW") {
      throw DataError("not a checkpoint file (bad magic): " + path);
    }
    const auto version = detail::read_pod<std::uint32_t>(in);
    if (version != 1) throw DataError("unsupported checkpoint version " + std::to_string(version));
    ModelConfig cfg;
    cfg.d = detail::read_pod<std::uint32_t>(in);
    cfg.n_blocks = detail::read_pod<std::uint32_t>(in);
    cfg.n_heads = detail::read_pod<std::uint32_t>(in);
    cfg.k = detail::read_pod<std::uint32_t>(in);
    cfg.t_h = detail::read_pod<std::uint32_t>(in);
    cfg.t_f = detail::read_pod<std::uint32_t>(in);
    cfg.dt_out = detail::read_pod<double>(in);
    cfg.pose_scale = detail::read_pod<double>(in);
    const auto flags = detail::read_pod<std::uint8_t>(in);
    cfg.positional_normalization = flags & 1;
    cfg.angular_normalization = flags & 2;
    cfg.use_pose_embedding = flags & 4;
    cfg.flight_params = flags & 8;
    cfg.softplus_speed = flags & 16;
    AscentModel model(cfg);
    const auto n_params = detail::read_pod<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n_params; ++i) {
      const auto name_len = detail::read_pod<std::uint32_t>(in);
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      const auto ndim = detail::read_pod<std::uint32_t>(in);
      Shape shape(ndim);
      for (auto& d : shape) d = std::size_t(detail::read_pod<std::uint64_t>(in));
      auto it = model.params_.find(name);
      if (it == model.params_.end() || it->second.shape() != shape) {
        throw DataError("checkpoint parameter mismatch: " + name);
      }
      in.read(reinterpret_cast<char*>(it->second.data().data()),
              std::streamsize(it->second.size() * sizeof(double)));
      if (!in) throw IoError("unexpected end of checkpoint: " + path);
    }
    return model;
  }

 private:
  Tensor head(const Tensor& x, const std::string& prefix) const {
    Tensor h1 = relu(add(matmul(x, param(prefix + ".l1.w")), param(prefix + ".l1.b")));
    Tensor h2 = relu(add(matmul(h1, param(prefix + ".l2.w")), param(prefix + ".l2.b")));
    return add(matmul(h2, param(prefix + ".l3.w")), param(prefix + ".l3.b"));
  }

  // Pre-norm residual block: x + proj(attn(ln1(x))), then x + ffn(ln2(x)).
  Tensor encoder_block(const Tensor& x, std::size_t b) const {
    const std::string p = "enc" + std::to_string(b);
    Tensor n1 = layer_norm(x, param(p + ".ln1.g"), param(p + ".ln1.b"));
    Tensor q = add(matmul(n1, param(p + ".q.w")), param(p + ".q.b"));
    Tensor k = add(matmul(n1, param(p + ".k.w")), param(p + ".k.b"));
    Tensor v = add(matmul(n1, param(p + ".v.w")), param(p + ".v.b"));
    Tensor a = attention(q, k, v, cfg_.n_heads);
    Tensor h = add(x, add(matmul(a, param(p + ".out.w")), param(p + ".out.b")));
    Tensor n2 = layer_norm(h, param(p + ".ln2.g"), param(p + ".ln2.b"));
    Tensor f1 = relu(add(matmul(n2, param(p + ".ffn1.w")), param(p + ".ffn1.b")));
    Tensor f2 = add(matmul(f1, param(p + ".ffn2.w")), param(p + ".ffn2.b"));
    return add(h, f2);
  }

  void add_linear(std::mt19937_64& rng, const std::string& name, std::size_t in, std::size_t out) {
    // Kaiming-uniform fan-in initialization; biases start at zero.
    const double bound = std::sqrt(6.0 / double(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(in * out);
    for (auto& v : w) v = dist(rng);
    params_.emplace(name + ".w", Tensor::from({in, out}, std::move(w), true));
    params_.emplace(name + ".b", Tensor::zeros({out}, true));
  }

  void add_layer_norm(const std::string& name) {
    params_.emplace(name + ".g", Tensor::full({cfg_.d}, 1.0, true));
    params_.emplace(name + ".b", Tensor::zeros({cfg_.d}, true));
  }

  void build_parameters(std::mt19937_64& rng) {
    const std::size_t d = cfg_.d, h = 2 * cfg_.d;
    add_linear(rng, "embed.in", 3, d);
    add_linear(rng, "embed.time", 1, d);
    for (std::size_t b = 0; b < cfg_.n_blocks; ++b) {
      const std::string p = "enc" + std::to_string(b);
      add_layer_norm(p + ".ln1");
      add_linear(rng, p + ".q", d, d);
      add_linear(rng, p + ".k", d, d);
      add_linear(rng, p + ".v", d, d);
      add_linear(rng, p + ".out", d, d);
      add_layer_norm(p + ".ln2");
      add_linear(rng, p + ".ffn1", d, h);
      add_linear(rng, p + ".ffn2", h, d);
    }
    if (cfg_.use_pose_embedding) {
      add_linear(rng, "pose.l1", 7, d);
      add_linear(rng, "pose.l2", d, d);
    }
    // Mode queries: small Gaussian init to break mode symmetry.
    {
      std::normal_distribution<double> dist(0.0, 0.02);
      std::vector<double> q(cfg_.k * d);
      for (auto& v : q) v = dist(rng);
      params_.emplace("queries", Tensor::from({cfg_.k, d}, std::move(q), true));
    }
    auto add_head = [&](const std::string& name, std::size_t out) {
      add_linear(rng, name + ".l1", d, h);
      add_linear(rng, name + ".l2", h, h);
      add_linear(rng, name + ".l3", h, out);
    };
    if (cfg_.flight_params) {
      add_head("head.speed", cfg_.t_f);
      add_head("head.yaw", 2 * cfg_.t_f);
      add_head("head.pitch", 2 * cfg_.t_f);
    } else {
      add_head("head.xyz", 3 * cfg_.t_f);
    }
    add_head("head.score", 1);
  }

  ModelConfig cfg_;
  std::map<std::string, Tensor> params_;
};

}  // namespace ascent
