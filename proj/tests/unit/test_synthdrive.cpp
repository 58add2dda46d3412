#include <fstream>
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "numlm/dataset.hpp"
#include "numlm/errors.hpp"
#include "numlm/synthdrive.hpp"

using namespace numlm;

TEST(Kinematics, WaypointsFollowUnicycleIntegration) {
  synth::EpisodeParams p;
  p.seed = 123;
  p.horizon = 5;
  const auto ep = synth::generate_episode(p);
  double x = 0.0, y = 0.0;
  const double v0 = ep.history_speeds.back();
  for (std::size_t t = 0; t < p.horizon; ++t) {
    const double v = v0 + ep.accel * static_cast<double>(t) * p.dt;
    const double th = ep.yaw_rate * static_cast<double>(t) * p.dt;
    x += v * p.dt * std::cos(th);
    y += v * p.dt * std::sin(th);
    EXPECT_NEAR(ep.waypoints[t][0], x, 1e-12);
    EXPECT_NEAR(ep.waypoints[t][1], y, 1e-12);
  }
  EXPECT_NEAR(ep.next_speed, v0 + ep.accel * p.dt, 1e-12);
  EXPECT_EQ(ep.observation.size(), 4u);
}

TEST(Kinematics, StraightConstantSpeedCase) {
  synth::EpisodeParams p;
  p.seed = 9;
  p.max_yaw_rate = 1e-12;
  p.accel_min = -1e-12;
  p.accel_max = 1e-12;
  const auto ep = synth::generate_episode(p);
  const double v = ep.history_speeds.back();
  for (std::size_t t = 0; t < p.horizon; ++t) {
    EXPECT_NEAR(ep.waypoints[t][0], v * p.dt * static_cast<double>(t + 1), 1e-9);
    EXPECT_NEAR(ep.waypoints[t][1], 0.0, 1e-9);
  }
}

TEST(Kinematics, ParametersStayInRange) {
  synth::EpisodeParams p;
  for (std::uint64_t s = 0; s < 500; ++s) {
    p.seed = s;
    const auto ep = synth::generate_episode(p);
    EXPECT_GE(ep.history_speeds.back(), p.speed_min);
    EXPECT_LE(ep.history_speeds.back(), p.speed_max);
    EXPECT_LE(std::abs(ep.yaw_rate), p.max_yaw_rate * std::numbers::pi / 180.0);
    EXPECT_GE(ep.accel, p.accel_min);
    EXPECT_LE(ep.accel, p.accel_max);
  }
}

TEST(Episodes, DeterministicPerSeed) {
  synth::EpisodeParams p;
  p.seed = 77;
  const auto a = synth::generate_episode(p);
  const auto b = synth::generate_episode(p);
  EXPECT_EQ(a.waypoints, b.waypoints);
  EXPECT_EQ(a.history_speeds, b.history_speeds);
  p.seed = 78;
  EXPECT_NE(synth::generate_episode(p).waypoints, a.waypoints);
}

TEST(Episodes, InvalidParamsRejected) {
  synth::EpisodeParams p;
  p.dt = 0.0;
  EXPECT_THROW(synth::generate_episode(p), ConfigError);
  EXPECT_THROW(synth::parse_task("fly"), ConfigError);
}

TEST(Dialogues, AnswerNumbersMatchTheTask) {
  synth::EpisodeParams p;
  p.seed = 5;
  const auto ep = synth::generate_episode(p);
  for (auto task : {synth::Task::speed, synth::Task::traj, synth::Task::copy}) {
    const auto r = data::with_encoding(synth::episode_dialogue(ep, task, "x"));
    ASSERT_TRUE(r.encoded);
    std::size_t answer = 0;
    for (const auto& s : r.encoded->spans)
      if (r.encoded->turns[s.turn].role == text::Role::assistant) ++answer;
    EXPECT_EQ(answer, synth::answer_number_count(task, p)) << synth::task_name(task);
  }
  const auto traj = data::with_encoding(synth::episode_dialogue(ep, synth::Task::traj, "t"));
  EXPECT_NE(traj.encoded->turns[0].tmpl.find("Plan 3 waypoints"), std::string::npos);
}

TEST(Splits, SeedsAreDisjointAndFilesRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "numlm_split_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto info = synth::make_split(synth::Task::traj, 50, 20, 3, dir);
  std::set<std::uint64_t> train(info.train_seeds.begin(), info.train_seeds.end());
  for (auto s : info.test_seeds) EXPECT_FALSE(train.count(s));
  EXPECT_EQ(train.size(), 50u);
  const auto recs = data::read_jsonl(info.train_path);
  ASSERT_EQ(recs.size(), 50u);
  const auto again = synth::make_records(synth::Task::traj, 50, 3, false);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(data::to_json_line(recs[i]), data::to_json_line(again[i]));
  }
  EXPECT_TRUE(std::filesystem::exists(info.manifest_path));
  std::filesystem::remove_all(dir);
}

TEST(Dataset, BadLineReportsLineNumber) {
  const auto path = std::filesystem::temp_directory_path() / "numlm_bad.jsonl";
  {
    std::ofstream out(path);
    out << data::to_json_line(synth::make_records(synth::Task::copy, 1, 1, false)[0]) << "\n{not json\n";
  }
  try {
    data::read_jsonl(path);
    FAIL() << "expected a parse error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}
