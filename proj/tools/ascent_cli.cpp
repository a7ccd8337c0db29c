// Command-line front end: preprocess | synth | train | eval | predict | bench.
// Exit codes: 0 success, 1 usage/config, 2 data/io, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ascent/ascent.hpp"

namespace fs = std::filesystem;
using namespace ascent;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string setting;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
};

void add_global_opts(CLI::App* cmd, GlobalOpts& g) {
  cmd->add_option("--config", g.config_path, "key = value config file with [sections]");
  cmd->add_option("--setting", g.setting,
                  "named experiment setting (trajair-11s | atp-16s | goodflight-40s)");
  cmd->add_option("--seed", g.seed, "run seed (overrides config)");
  cmd->add_option("--out", g.out_dir, "output directory")->capture_default_str();
}

// ASCENT_THREADS caps worker parallelism. All current pipelines are
// single-threaded for bit-determinism, so the cap is validated and recorded
// but never exceeded by construction.
std::size_t resolve_threads() {
  const char* env = std::getenv("ASCENT_THREADS");
  if (!env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1) {
    throw ConfigError("ASCENT_THREADS must be a positive integer");
  }
  return std::size_t(v);
}

RunConfig load_run_config(const GlobalOpts& g) {
  KeyValueConfig cfg;
  if (!g.config_path.empty()) cfg = KeyValueConfig::parse_file(g.config_path);
  if (!g.setting.empty()) cfg.set("setting", g.setting);
  if (g.seed) cfg.set("seed", std::to_string(*g.seed));
  cfg.set("out", g.out_dir);
  RunConfig run = resolve_run_config(cfg);
  for (const auto& w : run.warnings) std::cerr << "warning: " << w << "\n";
  return run;
}

void write_resolved(const RunConfig& run) {
  fs::create_directories(run.out_dir);
  std::ofstream out(fs::path(run.out_dir) / "config.resolved");
  if (!out) throw IoError("cannot write config.resolved under " + run.out_dir);
  out << serialize_run_config(run);
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << contents;
}

Maneuver maneuver_from_name(const std::string& name) {
  for (Maneuver m : kAllManeuvers) {
    if (maneuver_name(m) == name) return m;
  }
  throw ConfigError("unknown maneuver: " + name);
}

// "landing:0.5,go_around:0.5" -> weighted maneuver mix
std::vector<std::pair<Maneuver, double>> parse_mix(const std::string& text) {
  std::vector<std::pair<Maneuver, double>> mix;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("mix entries must be name:weight");
    mix.emplace_back(maneuver_from_name(item.substr(0, colon)),
                     std::stod(item.substr(colon + 1)));
  }
  return mix;
}

Predictor cv_predictor(std::size_t k) {
  return replicate_single_mode(
      [](const Sample& s) {
        return constant_velocity_forecast(s.history, s.future.size(), 1.0 / s.future_rate);
      },
      k);
}

std::string format_prediction_json(const Sample& s, const ModePrediction& pred) {
  std::ostringstream out;
  out.precision(12);
  out << "{\"scene_id\":" << s.scene_id << ",\"agent_id\":" << s.agent_id << ",\"modes\":[";
  for (std::size_t i = 0; i < pred.trajectories.size(); ++i) {
    if (i) out << ",";
    out << "{\"score\":" << pred.scores[i] << ",\"trajectory\":[";
    for (std::size_t t = 0; t < pred.trajectories[i].size(); ++t) {
      const Vec3& p = pred.trajectories[i][t];
      if (t) out << ",";
      out << "[" << p.x << "," << p.y << "," << p.z << "]";
    }
    out << "]}";
  }
  out << "]}";
  return out.str();
}

int run_cli(int argc, char** argv) {
  CLI::App app{"3D aircraft trajectory forecasting for terminal airspace"};
  app.require_subcommand(1);

  // --- preprocess -----------------------------------------------------------
  GlobalOpts pre_g;
  std::vector<std::string> scene_files;
  double ceiling = kDefaultCeilingKm, radius = kDefaultRadiusKm;
  std::vector<double> runway_a = {0, 0, 0}, runway_b = {1.2, 0, 0};
  bool no_filter = false, tartan_split = false;
  auto* pre = app.add_subcommand("preprocess", "window raw scene files into a canonical dataset");
  add_global_opts(pre, pre_g);
  pre->add_option("--scene", scene_files, "raw scene file(s): frame agent x y z per row")
      ->required();
  pre->add_option("--ceiling", ceiling, "altitude ceiling, km")->capture_default_str();
  pre->add_option("--radius", radius, "recording radius around the runway, km")
      ->capture_default_str();
  pre->add_option("--runway-a", runway_a, "runway endpoint A (x y z, km)")->expected(3);
  pre->add_option("--runway-b", runway_b, "runway endpoint B (x y z, km)")->expected(3);
  pre->add_flag("--no-filter", no_filter, "skip the airspace filter");
  pre->add_flag("--tartan-split", tartan_split,
                "write s1.ascd/s2.ascd by file-level quartile split instead of dataset.ascd");
  pre->callback([&] {
    RunConfig run = load_run_config(pre_g);
    write_resolved(run);
    const std::pair<Vec3, Vec3> runway{{runway_a[0], runway_a[1], runway_a[2]},
                                       {runway_b[0], runway_b[1], runway_b[2]}};
    auto window_file = [&](const std::string& path, std::vector<Sample>& sink) {
      SceneReadResult scene = read_scene_file(path, {}, run.setting.base_rate);
      if (scene.skipped_rows) {
        std::cerr << path << ": skipped " << scene.skipped_rows << " malformed rows\n";
      }
      for (const auto& at : scene.trajectories) {
        std::vector<Trajectory> segments =
            no_filter ? std::vector<Trajectory>{at.trajectory}
                      : filter_airspace(at.trajectory, ceiling, runway, radius);
        for (const auto& seg : segments) {
          auto samples = window_samples(seg, run.setting, at.agent_id, 0);
          sink.insert(sink.end(), samples.begin(), samples.end());
        }
      }
    };
    if (tartan_split) {
      auto [s1_files, s2_files] = make_tartan_splits(scene_files);
      std::vector<Sample> s1, s2;
      for (const auto& f : s1_files) window_file(f, s1);
      for (const auto& f : s2_files) window_file(f, s2);
      write_canonical_dataset(s1, (fs::path(run.out_dir) / "s1.ascd").string());
      write_canonical_dataset(s2, (fs::path(run.out_dir) / "s2.ascd").string());
      std::cout << "wrote " << s1.size() << " samples to s1.ascd, " << s2.size()
                << " to s2.ascd\n";
    } else {
      std::vector<Sample> all;
      for (const auto& f : scene_files) window_file(f, all);
      write_canonical_dataset(all, (fs::path(run.out_dir) / "dataset.ascd").string());
      std::cout << "wrote " << all.size() << " samples to dataset.ascd\n";
    }
  });

  // --- synth ----------------------------------------------------------------
  GlobalOpts syn_g;
  std::size_t n_train = 40, n_val = 8, n_test = 10;
  double noise = 0.02;
  std::string mix_text = "full_pattern:0.4,landing:0.2,go_around:0.2,"
                         "departure_straight:0.1,departure_turn:0.1";
  auto* syn = app.add_subcommand("synth", "generate synthetic traffic-pattern datasets");
  add_global_opts(syn, syn_g);
  syn->add_option("--train-scenarios", n_train, "scenarios in the training set")
      ->capture_default_str();
  syn->add_option("--val-scenarios", n_val, "scenarios in the validation set")
      ->capture_default_str();
  syn->add_option("--test-scenarios", n_test, "scenarios in the test set")->capture_default_str();
  syn->add_option("--noise", noise, "position noise sigma, km")->capture_default_str();
  syn->add_option("--mix", mix_text, "maneuver mix, name:weight comma-separated")
      ->capture_default_str();
  syn->callback([&] {
    RunConfig run = load_run_config(syn_g);
    write_resolved(run);
    auto mix = parse_mix(mix_text);
    auto emit = [&](const char* name, std::size_t n, std::uint64_t seed_offset) {
      PatternSpec spec;
      spec.noise_sigma = noise;
      spec.seed = run.seed + seed_offset;
      auto labeled = generate_dataset(spec, n, mix, run.setting);
      std::vector<Sample> samples;
      samples.reserve(labeled.size());
      for (auto& ls : labeled) samples.push_back(std::move(ls.sample));
      write_canonical_dataset(samples, (fs::path(run.out_dir) / name).string());
      std::cout << "wrote " << samples.size() << " samples to " << name << "\n";
    };
    emit("train.ascd", n_train, 0);
    emit("val.ascd", n_val, 1000000);
    emit("test.ascd", n_test, 2000000);
  });

  // --- train ----------------------------------------------------------------
  GlobalOpts tr_g;
  std::string tr_data, tr_val;
  auto* tr = app.add_subcommand("train", "train a model on a canonical dataset");
  add_global_opts(tr, tr_g);
  tr->add_option("--data", tr_data, "training dataset (.ascd)");
  tr->add_option("--val", tr_val, "validation dataset (.ascd)");
  tr->callback([&] {
    RunConfig run = load_run_config(tr_g);
    if (tr_data.empty()) tr_data = run.train_path;
    if (tr_val.empty()) tr_val = run.val_path;
    if (tr_data.empty()) tr_data = (fs::path(run.out_dir) / "train.ascd").string();
    if (tr_val.empty()) {
      const fs::path candidate = fs::path(run.out_dir) / "val.ascd";
      if (fs::exists(candidate)) tr_val = candidate.string();
    }
    run.train_path = tr_data;
    run.val_path = tr_val;
    write_resolved(run);

    auto dataset = read_canonical_dataset(tr_data);
    std::vector<Sample> val;
    if (!tr_val.empty()) val = read_canonical_dataset(tr_val);

    AscentModel model(run.model, run.seed);
    std::cout << "training " << model.parameter_count() << " parameters on " << dataset.size()
              << " samples\n";
    const std::string ckpt = (fs::path(run.out_dir) / "model.ckpt").string();
    TrainResult result = train(model, dataset, run.train, val.empty() ? nullptr : &val, ckpt);
    if (val.empty()) model.save(ckpt);  // no validation: keep the final weights
    write_file(fs::path(run.out_dir) / "metrics.jsonl", result.metrics_jsonl());
    std::cout << "done; final loss " << result.epochs.back().mean_loss << "\n";
  });

  // --- eval -----------------------------------------------------------------
  GlobalOpts ev_g;
  std::string ev_data, ev_model, baseline = "model";
  std::optional<double> ev_radius;
  auto* ev = app.add_subcommand("eval", "evaluate a model or baseline on a dataset");
  add_global_opts(ev, ev_g);
  ev->add_option("--data", ev_data, "evaluation dataset (.ascd)");
  ev->add_option("--model", ev_model, "model checkpoint (required for --baseline model)");
  ev->add_option("--baseline", baseline, "model | cv | nn (nn banks --nn-train)")
      ->capture_default_str();
  std::string nn_train;
  bool nn_raw = false;
  ev->add_option("--nn-train", nn_train, "retrieval bank dataset for the nn baseline");
  ev->add_flag("--nn-raw", nn_raw, "match nearest neighbor on raw coordinates");
  ev->add_option("--radius-filter", ev_radius,
                 "cross-dataset radius filter around the origin runway, km");
  ev->callback([&] {
    RunConfig run = load_run_config(ev_g);
    if (ev_data.empty()) ev_data = run.test_path;
    if (ev_data.empty()) ev_data = (fs::path(run.out_dir) / "test.ascd").string();
    write_resolved(run);
    auto dataset = read_canonical_dataset(ev_data);

    Predictor predictor;
    std::optional<AscentModel> model;
    std::optional<NearestNeighborBank> bank;
    if (baseline == "model") {
      if (ev_model.empty()) ev_model = (fs::path(run.out_dir) / "model.ckpt").string();
      model.emplace(AscentModel::load(ev_model));
      predictor = model_predictor(*model);
    } else if (baseline == "cv") {
      predictor = cv_predictor(run.setting.k);
    } else if (baseline == "nn") {
      if (nn_train.empty()) throw ConfigError("--baseline nn requires --nn-train");
      bank.emplace(read_canonical_dataset(nn_train), !nn_raw);
      predictor = replicate_single_mode(
          [&bank](const Sample& s) { return bank->forecast(s.history); }, run.setting.k);
    } else {
      throw ConfigError("unknown baseline: " + baseline);
    }

    EvalReport report;
    if (ev_radius) {
      PatternSpec spec;
      report = cross_dataset_eval(predictor, dataset, ev_radius,
                                  {spec.runway_a, spec.runway_b}, run.setting.name);
    } else {
      report = evaluate(predictor, dataset, run.setting.name);
    }
    write_file(fs::path(run.out_dir) / "report.json", report.to_json() + "\n");
    std::cout << "minADE " << report.minade << " km, minFDE " << report.minfde << " km over "
              << report.n_samples << " samples\n";
  });

  // --- predict --------------------------------------------------------------
  GlobalOpts pd_g;
  std::string pd_data, pd_model;
  std::size_t pd_limit = 0;
  auto* pd = app.add_subcommand("predict", "dump per-sample mode predictions as JSONL");
  add_global_opts(pd, pd_g);
  pd->add_option("--data", pd_data, "input dataset (.ascd)");
  pd->add_option("--model", pd_model, "model checkpoint");
  pd->add_option("--limit", pd_limit, "predict only the first N samples (0 = all)");
  pd->callback([&] {
    RunConfig run = load_run_config(pd_g);
    if (pd_data.empty()) pd_data = (fs::path(run.out_dir) / "test.ascd").string();
    if (pd_model.empty()) pd_model = (fs::path(run.out_dir) / "model.ckpt").string();
    write_resolved(run);
    auto dataset = read_canonical_dataset(pd_data);
    AscentModel model = AscentModel::load(pd_model);
    BatchedInference engine(model);
    std::ostringstream out;
    const std::size_t n = pd_limit ? std::min(pd_limit, dataset.size()) : dataset.size();
    for (std::size_t i = 0; i < n; ++i) {
      ModePrediction pred = engine.predict({dataset[i].history})[0];
      out << format_prediction_json(dataset[i], pred) << "\n";
    }
    write_file(fs::path(run.out_dir) / "predictions.jsonl", out.str());
    std::cout << "wrote " << n << " predictions\n";
  });

  // --- bench ----------------------------------------------------------------
  GlobalOpts bn_g;
  std::string bn_model;
  std::vector<std::size_t> batches = {1, 4, 8, 16, 32};
  std::size_t trials = 30, warmup = 5;
  auto* bn = app.add_subcommand("bench", "measure batched forward latency");
  add_global_opts(bn, bn_g);
  bn->add_option("--model", bn_model, "checkpoint (default: fresh model from config)");
  bn->add_option("--batches", batches, "batch sizes to time")->capture_default_str();
  bn->add_option("--trials", trials, "timing repetitions per batch size")->capture_default_str();
  bn->add_option("--warmup", warmup, "discarded warm-up passes")->capture_default_str();
  bn->callback([&] {
    RunConfig run = load_run_config(bn_g);
    write_resolved(run);
    std::optional<AscentModel> model;
    if (!bn_model.empty()) {
      model.emplace(AscentModel::load(bn_model));
    } else {
      model.emplace(run.model, run.seed);
    }
    auto rows = latency_bench(*model, batches, warmup, trials, run.seed);
    write_file(fs::path(run.out_dir) / "latency.csv", latency_csv(rows));
    for (const auto& r : rows) {
      std::cout << "B=" << r.batch_size << ": median " << r.median_ms << " ms, p90 " << r.p90_ms
                << " ms\n";
    }
  });

  (void)resolve_threads();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
