#pragma once

// Synthetic driving episodes under constant-acceleration, constant-yaw-rate
// unicycle kinematics, rendered into three dialogue tasks:
//   speed  one number out (next speed)
//   traj   2T numbers out (T waypoints)
//   copy   echo one input number (encoding diagnostic)

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "numlm/dataset.hpp"

namespace numlm::synth {

enum class Task { speed, traj, copy };

std::string_view task_name(Task t);
Task parse_task(std::string_view s);

struct EpisodeParams {
  std::uint64_t seed = 0;
  std::size_t horizon = 3;    // future waypoints T
  std::size_t history = 3;    // past speed samples
  double dt = 0.5;            // s
  double speed_min = 2.0;     // m/s
  double speed_max = 15.0;
  double max_yaw_rate = 20.0; // deg/s
  double accel_min = -1.0;    // m/s^2
  double accel_max = 1.5;
  double speed_noise = 0.0;   // std of noise on displayed history speeds
  double copy_min = -5.0;
  double copy_max = 5.0;

  void validate() const;
};

struct Episode {
  std::uint64_t seed = 0;
  double dt = 0.0;
  double yaw_rate = 0.0;  // rad/s
  double accel = 0.0;
  std::vector<double> history_speeds;     // oldest first, last is current
  std::vector<double> future_speeds;      // v_0 .. v_{T-1}, as integrated
  std::vector<double> future_headings;    // rad, theta_0 .. theta_{T-1}
  std::vector<std::array<double, 2>> waypoints;  // p_1 .. p_T
  double next_speed = 0.0;                // v_1
  double copy_value = 0.0;
  std::vector<double> observation;        // width 4
};

Episode generate_episode(const EpisodeParams& params);

data::DialogueRecord episode_dialogue(const Episode& ep, Task task, std::string id);

// Number of assistant-side numbers a task emits.
std::size_t answer_number_count(Task task, const EpisodeParams& params);

struct SplitInfo {
  std::vector<std::uint64_t> train_seeds;
  std::vector<std::uint64_t> test_seeds;
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::filesystem::path manifest_path;
};

// Train seeds are (base << 32) | i, test seeds (base << 32) | 2^31 | i.
std::uint64_t split_seed(std::uint64_t base_seed, bool test, std::size_t index);

SplitInfo make_split(Task task, std::size_t n_train, std::size_t n_test, std::uint64_t base_seed,
                     const std::filesystem::path& out_dir, EpisodeParams params = {});

std::vector<data::DialogueRecord> make_records(Task task, std::size_t n, std::uint64_t base_seed, bool test,
                                               EpisodeParams params = {});

}  // namespace numlm::synth
