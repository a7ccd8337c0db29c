#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "ascent/inference.hpp"
#include "ascent/model.hpp"
#include "helpers.hpp"

using namespace ascent;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.n_blocks = 2;
  cfg.n_heads = 2;
  cfg.k = 2;
  cfg.t_h = 4;
  cfg.t_f = 3;
  return cfg;
}

Trajectory random_history(std::mt19937_64& rng, std::size_t t_h) {
  std::uniform_real_distribution<double> pos(-3.0, 3.0);
  std::uniform_real_distribution<double> vel(-0.05, 0.05);
  Trajectory t;
  Vec3 p{pos(rng), pos(rng), 0.4 + 0.05 * pos(rng)};
  Vec3 v{vel(rng), vel(rng), 0.1 * vel(rng)};
  for (std::size_t i = 0; i < t_h; ++i) {
    t.points.push_back(p + v * double(i));
    t.timestamps.push_back(double(i));
  }
  return t;
}

// Scalar training-style loss touching every parameter: regression on all
// modes plus classification.
Tensor model_loss(const AscentModel& model, const Trajectory& history, const Tensor& target) {
  auto fg = model.forward_graph(history);
  Tensor loss = cross_entropy(fg.logits, 0);
  for (const auto& mode : fg.local_positions) {
    loss = add(loss, smooth_l1(mode, target, 1.0));
  }
  return loss;
}

}  // namespace

TEST_CASE("parameter count matches the closed-form formula") {
  for (ModelConfig cfg : {ModelConfig{}, tiny_config()}) {
    SUBCASE(("d=" + std::to_string(cfg.d)).c_str()) {
      AscentModel model(cfg, 1);
      CHECK(model.parameter_count() == AscentModel::expected_parameter_count(cfg));
    }
  }

  ModelConfig no_pose = tiny_config();
  no_pose.use_pose_embedding = false;
  CHECK(AscentModel(no_pose, 1).parameter_count() ==
        AscentModel::expected_parameter_count(no_pose));

  ModelConfig xyz = tiny_config();
  xyz.flight_params = false;
  CHECK(AscentModel(xyz, 1).parameter_count() == AscentModel::expected_parameter_count(xyz));
}

TEST_CASE("construction is deterministic in the init seed") {
  AscentModel a(tiny_config(), 42);
  AscentModel b(tiny_config(), 42);
  AscentModel c(tiny_config(), 43);
  bool same = true, differ = false;
  for (const auto& [name, p] : a.parameters()) {
    const auto& q = b.param(name);
    const auto& r = c.param(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] != q[i]) same = false;
      if (p[i] != r[i]) differ = true;
    }
  }
  CHECK(same);
  CHECK(differ);
}

TEST_CASE("predict: shapes, score normalization, flight params") {
  std::mt19937_64 rng(7);
  ModelConfig cfg = tiny_config();
  AscentModel model(cfg, 3);
  Trajectory hist = random_history(rng, cfg.t_h);
  ModePrediction pred = model.predict(hist);
  REQUIRE(pred.trajectories.size() == cfg.k);
  REQUIRE(pred.scores.size() == cfg.k);
  REQUIRE(pred.params.size() == cfg.k);
  double total = 0.0;
  for (double s : pred.scores) {
    CHECK(s > 0.0);
    total += s;
  }
  CHECK(total == doctest::Approx(1.0));
  for (const auto& mode : pred.trajectories) {
    REQUIRE(mode.size() == cfg.t_f);
    // softplus speed keeps per-step displacements non-negative but bounded
    for (std::size_t t = 1; t < mode.size(); ++t) {
      CHECK(std::isfinite(mode[t].x));
    }
  }
  // non-negative speeds under softplus
  for (const auto& fp : pred.params) {
    for (double s : fp.speed) CHECK(s >= 0.0);
  }
}

TEST_CASE("rollout anchoring: first displacement leaves the last history point") {
  std::mt19937_64 rng(8);
  ModelConfig cfg = tiny_config();
  AscentModel model(cfg, 3);
  Trajectory hist = random_history(rng, cfg.t_h);
  ModePrediction pred = model.predict(hist);
  for (std::size_t i = 0; i < cfg.k; ++i) {
    const double step = distance(pred.trajectories[i][0], hist.points.back());
    const double speed = pred.params[i].speed[0];
    CHECK(step == doctest::Approx(speed * cfg.dt_out).epsilon(1e-9));
  }
}

TEST_CASE("full-frame normalization makes predictions pose-equivariant") {
  std::mt19937_64 rng(9);
  ModelConfig cfg = tiny_config();
  cfg.use_pose_embedding = false;  // pose embedding deliberately breaks invariance
  AscentModel model(cfg, 5);

  Trajectory hist = random_history(rng, cfg.t_h);
  ModePrediction base = model.predict(hist);

  const double yaw = 1.234;
  const Vec3 shift{5.0, -2.0, 0.1};
  Trajectory moved;
  moved.timestamps = hist.timestamps;
  for (const auto& p : hist.points) moved.points.push_back(rotate_to_global(p, yaw, 0.0) + shift);
  ModePrediction transformed = model.predict(moved);

  for (std::size_t i = 0; i < cfg.k; ++i) {
    CHECK(transformed.scores[i] == doctest::Approx(base.scores[i]).epsilon(1e-6));
    for (std::size_t t = 0; t < cfg.t_f; ++t) {
      const Vec3 expect = rotate_to_global(base.trajectories[i][t], yaw, 0.0) + shift;
      CHECK(distance(transformed.trajectories[i][t], expect) < 1e-6);
    }
  }
}

TEST_CASE("ablation variants produce valid predictions") {
  std::mt19937_64 rng(10);
  auto run = [&](ModelConfig cfg) {
    AscentModel model(cfg, 11);
    Trajectory hist = random_history(rng, cfg.t_h);
    ModePrediction pred = model.predict(hist);
    REQUIRE(pred.trajectories.size() == cfg.k);
    for (const auto& mode : pred.trajectories) {
      REQUIRE(mode.size() == cfg.t_f);
      for (const auto& p : mode) {
        CHECK(std::isfinite(p.x));
        CHECK(std::isfinite(p.y));
        CHECK(std::isfinite(p.z));
      }
    }
    return pred;
  };

  ModelConfig cfg = tiny_config();
  cfg.positional_normalization = false;
  cfg.angular_normalization = false;
  run(cfg);

  cfg = tiny_config();
  cfg.angular_normalization = false;
  run(cfg);

  cfg = tiny_config();
  cfg.use_pose_embedding = false;
  run(cfg);

  cfg = tiny_config();
  cfg.flight_params = false;
  ModePrediction xyz = run(cfg);
  CHECK(xyz.params.empty());

  cfg = tiny_config();
  cfg.softplus_speed = false;
  run(cfg);
}

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_config();
  cfg.n_heads = 3;  // does not divide d = 8
  CHECK_THROWS_AS(AscentModel(cfg, 0), ConfigError&);
  cfg = tiny_config();
  cfg.t_h = 1;
  CHECK_THROWS_AS(AscentModel(cfg, 0), ConfigError&);
  cfg = tiny_config();
  cfg.dt_out = 0.0;
  CHECK_THROWS_AS(AscentModel(cfg, 0), ConfigError&);

  AscentModel ok(tiny_config(), 0);
  Trajectory short_hist;
  short_hist.points = {{0, 0, 0}, {1, 0, 0}};
  short_hist.timestamps = {0, 1};
  CHECK_THROWS_AS(ok.predict(short_hist), DimensionError&);
  CHECK_THROWS_AS(ok.param("nope"), ConfigError&);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  ModelConfig cfg = tiny_config();
  cfg.softplus_speed = false;
  cfg.angular_normalization = false;
  AscentModel model(cfg, 21);
  std::string path = (std::filesystem::temp_directory_path() / "ascent_model.ckpt").string();
  model.save(path);
  AscentModel back = AscentModel::load(path);

  CHECK(back.config().d == cfg.d);
  CHECK(back.config().softplus_speed == cfg.softplus_speed);
  CHECK(back.config().angular_normalization == cfg.angular_normalization);
  CHECK(back.config().dt_out == cfg.dt_out);
  for (const auto& [name, p] : model.parameters()) {
    const auto& q = back.param(name);
    REQUIRE(q.size() == p.size());
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(q[i] == p[i]);
  }
  std::remove(path.c_str());

  CHECK_THROWS_AS(AscentModel::load("/nonexistent/model.ckpt"), IoError&);
}

TEST_CASE("full model gradients match finite differences") {
  std::mt19937_64 rng(12);
  ModelConfig cfg = tiny_config();
  AscentModel model(cfg, 33);
  Trajectory hist = random_history(rng, cfg.t_h);
  Tensor target = testutil::random_tensor({cfg.t_f, 3}, rng, -0.5, 0.5);

  for (auto [name, p] : model.parameters()) p.set_requires_grad(true).zero_grad();
  Tensor loss = model_loss(model, hist, target);
  backward(loss);

  const double h = 1e-6;
  double worst = 0.0;
  for (auto [name, p] : model.parameters()) {
    const auto analytic = p.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p.data()[i];
      double up, down;
      {
        NoGradGuard ng;
        p.data()[i] = orig + h;
        up = model_loss(model, hist, target).value();
        p.data()[i] = orig - h;
        down = model_loss(model, hist, target).value();
        p.data()[i] = orig;
      }
      // floor 1e-3 = absolute tolerance 1e-7 for true-zero gradients, where
      // central differences only return cancellation noise
      worst = std::max(worst, testutil::rel_err(analytic[i], (up - down) / (2.0 * h), 1e-3));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("batched inference matches the autograd path") {
  std::mt19937_64 rng(13);
  for (ModelConfig cfg : {tiny_config(), [] {
         ModelConfig c = tiny_config();
         c.flight_params = false;
         c.use_pose_embedding = false;
         return c;
       }()}) {
    AscentModel model(cfg, 55);
    BatchedInference engine(model);
    std::vector<Trajectory> histories;
    for (int i = 0; i < 6; ++i) histories.push_back(random_history(rng, cfg.t_h));
    auto batched = engine.predict(histories);
    REQUIRE(batched.size() == histories.size());
    for (std::size_t b = 0; b < histories.size(); ++b) {
      ModePrediction ref = model.predict(histories[b]);
      for (std::size_t i = 0; i < cfg.k; ++i) {
        CHECK(batched[b].scores[i] == doctest::Approx(ref.scores[i]).epsilon(1e-9));
        for (std::size_t t = 0; t < cfg.t_f; ++t) {
          CHECK(distance(batched[b].trajectories[i][t], ref.trajectories[i][t]) < 1e-9);
        }
      }
    }
  }
}
