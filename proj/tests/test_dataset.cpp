#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "ascent/dataset.hpp"

using namespace ascent;

namespace {

std::string write_temp(const std::string& contents) {
  static int counter = 0;
  std::string path = (std::filesystem::temp_directory_path() /
                      ("ascent_scene_" + std::to_string(counter++) + ".txt"))
                         .string();
  std::ofstream out(path);
  out << contents;
  return path;
}

Trajectory straight_line(std::size_t n, double dt = 1.0) {
  Trajectory t;
  for (std::size_t i = 0; i < n; ++i) {
    t.points.push_back({0.01 * double(i), 0.02 * double(i), 0.5});
    t.timestamps.push_back(double(i) * dt);
  }
  return t;
}

}  // namespace

TEST_CASE("scene reader: columns, separators, trailing fields") {
  // comma and whitespace separated rows, trailing wind columns ignored
  std::string path = write_temp(
      "0,1,0.0,0.0,0.5,3.2,-1.0\n"
      "1 1 0.1 0.0 0.5\n"
      "2,1,0.2,0.0,0.5,9.9\n"
      "0,2,5.0,5.0,1.0\n"
      "1,2,5.1,5.0,1.0\n");
  auto result = read_scene_file(path);
  CHECK(result.skipped_rows == 0);
  REQUIRE(result.trajectories.size() == 2);
  CHECK(result.trajectories[0].agent_id == 1);
  CHECK(result.trajectories[0].trajectory.size() == 3);
  CHECK(result.trajectories[0].trajectory.points[1].x == doctest::Approx(0.1));
  CHECK(result.trajectories[1].agent_id == 2);
  std::remove(path.c_str());
}

TEST_CASE("scene reader: malformed rows are skipped and counted") {
  std::string path = write_temp(
      "0,1,0.0,0.0,0.5\n"
      "not,a,row,at,all\n"
      "1,1,0.1\n"
      "1,1,nan,0.0,0.5\n"
      "2,1,0.2,0.0,0.5\n"
      "\n");
  auto result = read_scene_file(path);
  CHECK(result.skipped_rows == 3);
  REQUIRE(result.trajectories.size() == 2);  // frame gap 0 -> 2 splits agent 1
  CHECK(result.trajectories[0].trajectory.size() == 1);
  CHECK(result.trajectories[1].trajectory.size() == 1);
  std::remove(path.c_str());
}

TEST_CASE("scene reader: duplicate (frame, agent) keeps the first row") {
  std::string path = write_temp(
      "0,1,0.0,0.0,0.5\n"
      "0,1,9.9,9.9,0.9\n"
      "1,1,0.1,0.0,0.5\n");
  auto result = read_scene_file(path);
  REQUIRE(result.trajectories.size() == 1);
  CHECK(result.trajectories[0].trajectory.points[0].x == doctest::Approx(0.0));
  std::remove(path.c_str());
}

TEST_CASE("scene reader: empty or missing file") {
  CHECK_THROWS_AS(read_scene_file("/nonexistent/scene.txt"), IoError&);
  std::string path = write_temp("garbage line\n");
  CHECK_THROWS_AS(read_scene_file(path), DataError&);
  std::remove(path.c_str());
}

TEST_CASE("airspace filter: ceiling, radius, contiguous segments") {
  Trajectory t;
  // points 0..2 inside, 3 above ceiling, 4..5 inside, 6 out of radius
  std::vector<Vec3> pts = {{0, 0, 0.5}, {0.1, 0, 0.5}, {0.2, 0, 0.5}, {0.3, 0, 2.5},
                           {0.4, 0, 0.5}, {0.5, 0, 0.5}, {20.0, 0, 0.5}};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    t.points.push_back(pts[i]);
    t.timestamps.push_back(double(i));
  }
  auto segments = filter_airspace(t, kDefaultCeilingKm, {{0, 0, 0}, {1, 0, 0}}, kDefaultRadiusKm);
  REQUIRE(segments.size() == 2);
  CHECK(segments[0].size() == 3);
  CHECK(segments[1].size() == 2);
  CHECK(segments[1].timestamps[0] == doctest::Approx(4.0));

  CHECK_THROWS_AS(filter_airspace(t, 0.0, {{0, 0, 0}, {1, 0, 0}}, 5.0), ConfigError&);
}

TEST_CASE("windowing: span arithmetic and counts") {
  ExperimentSetting s = trajair_11s_setting();
  // span = (11-1)*1 + 12*10 + 1 = 131
  CHECK(window_samples(straight_line(130), s).empty());
  auto one = window_samples(straight_line(131), s);
  REQUIRE(one.size() == 1);
  auto five = window_samples(straight_line(135), s);
  CHECK(five.size() == 5);

  const Sample& smp = one[0];
  REQUIRE(smp.history.size() == 11);
  REQUIRE(smp.future.size() == 12);
  // history ends at the anchor (index 10), future sampled every 10 base steps
  CHECK(smp.history.points.back().x == doctest::Approx(0.01 * 10));
  CHECK(smp.future.points[0].x == doctest::Approx(0.01 * 20));
  CHECK(smp.future.points.back().x == doctest::Approx(0.01 * 130));
  // canonical timestamps: history ends at 0, future starts at one future step
  CHECK(smp.history.timestamps.front() == doctest::Approx(-10.0));
  CHECK(smp.history.timestamps.back() == doctest::Approx(0.0));
  CHECK(smp.future.timestamps.front() == doctest::Approx(10.0));
  CHECK(smp.future.timestamps.back() == doctest::Approx(120.0));
}

TEST_CASE("windowing: stride and rate validation") {
  ExperimentSetting s = trajair_11s_setting();
  s.stride = 3;
  CHECK(window_samples(straight_line(137), s).size() == 3);  // starts 0, 3, 6

  ExperimentSetting bad = trajair_11s_setting();
  bad.history_rate = 0.3;  // 1/0.3 not an integer
  CHECK_THROWS_AS(window_samples(straight_line(200), bad), ConfigError&);
}

TEST_CASE("named settings match the three protocols") {
  ExperimentSetting a = *named_setting("trajair-11s");
  CHECK(a.t_h() == 11);
  CHECK(a.t_f() == 12);
  CHECK(a.k == 5);
  CHECK(a.dt_out() == doctest::Approx(10.0));

  ExperimentSetting b = *named_setting("atp-16s");
  CHECK(b.t_h() == 4);  // 3 history points plus the anchor
  CHECK(b.t_f() == 24);
  CHECK(b.k == 5);
  CHECK(b.dt_out() == doctest::Approx(5.0));

  ExperimentSetting c = *named_setting("goodflight-40s");
  CHECK(c.t_h() == 40);
  CHECK(c.t_f() == 12);
  CHECK(c.k == 20);

  CHECK_FALSE(named_setting("unknown-setting").has_value());
}

TEST_CASE("tartan splits: first and last quarters vs middle half") {
  std::vector<std::string> files;
  for (int i = 0; i < 8; ++i) files.push_back("day" + std::to_string(i));
  auto [s1, s2] = make_tartan_splits(files);
  REQUIRE(s1.size() == 4);
  REQUIRE(s2.size() == 4);
  CHECK(s1[0] == "day0");
  CHECK(s1[1] == "day1");
  CHECK(s1[2] == "day6");
  CHECK(s1[3] == "day7");
  CHECK(s2[0] == "day2");

  // order-independent input
  std::vector<std::string> shuffled = {"day3", "day0", "day7", "day5",
                                       "day1", "day6", "day2", "day4"};
  auto [t1, t2] = make_tartan_splits(shuffled);
  CHECK(t1 == s1);
  CHECK(t2 == s2);

  CHECK_THROWS_AS(make_tartan_splits({}), DataError&);
}

TEST_CASE("canonical dataset round trip is bit-exact") {
  ExperimentSetting s = trajair_11s_setting();
  auto samples = window_samples(straight_line(140), s, /*agent_id=*/7, /*scene_id=*/42);
  REQUIRE(samples.size() == 10);

  std::string path =
      (std::filesystem::temp_directory_path() / "ascent_roundtrip.ascd").string();
  write_canonical_dataset(samples, path);
  auto back = read_canonical_dataset(path);
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i].agent_id == samples[i].agent_id);
    CHECK(back[i].scene_id == samples[i].scene_id);
    CHECK(back[i].history_rate == samples[i].history_rate);
    CHECK(back[i].future_rate == samples[i].future_rate);
    REQUIRE(back[i].history.size() == samples[i].history.size());
    REQUIRE(back[i].future.size() == samples[i].future.size());
    for (std::size_t j = 0; j < samples[i].history.size(); ++j) {
      CHECK(back[i].history.points[j].x == samples[i].history.points[j].x);
      CHECK(back[i].history.points[j].y == samples[i].history.points[j].y);
      CHECK(back[i].history.points[j].z == samples[i].history.points[j].z);
      CHECK(back[i].history.timestamps[j] == samples[i].history.timestamps[j]);
    }
    for (std::size_t j = 0; j < samples[i].future.size(); ++j) {
      CHECK(back[i].future.points[j].x == samples[i].future.points[j].x);
      CHECK(back[i].future.timestamps[j] == samples[i].future.timestamps[j]);
    }
  }
  std::remove(path.c_str());

  CHECK_THROWS_AS(read_canonical_dataset("/nonexistent/data.ascd"), IoError&);
}

TEST_CASE("canonical reader rejects corrupted headers") {
  std::string path = (std::filesystem::temp_directory_path() / "ascent_bad.ascd").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
  }
  CHECK_THROWS_AS(read_canonical_dataset(path), DataError&);
  std::remove(path.c_str());
}
