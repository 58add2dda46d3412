#include "numlm/synthdrive.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"
#include "numlm/errors.hpp"

namespace numlm::synth {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

std::string num(double v) { return text::format_fixed(v, 2); }

}  // namespace

std::string_view task_name(Task t) {
  switch (t) {
    case Task::speed:
      return "speed";
    case Task::traj:
      return "traj";
    case Task::copy:
      return "copy";
  }
  return "speed";
}

Task parse_task(std::string_view s) {
  if (s == "speed") return Task::speed;
  if (s == "traj") return Task::traj;
  if (s == "copy") return Task::copy;
  throw ConfigError("unknown task '" + std::string(s) + "' (expected speed|traj|copy)");
}

void EpisodeParams::validate() const {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (history < 2) throw ConfigError("history must be >= 2");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(speed_max > speed_min) || !(accel_max > accel_min) || !(max_yaw_rate > 0.0) || !(copy_max > copy_min)) {
    throw ConfigError("episode ranges must be non-degenerate");
  }
  if (speed_noise < 0.0) throw ConfigError("speed_noise must be non-negative");
}

Episode generate_episode(const EpisodeParams& params) {
  params.validate();
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  Episode ep;
  ep.seed = params.seed;
  ep.dt = params.dt;
  const double v0 = uniform(params.speed_min, params.speed_max);
  ep.accel = uniform(params.accel_min, params.accel_max);
  ep.yaw_rate = uniform(-params.max_yaw_rate, params.max_yaw_rate) * kDegToRad;
  ep.copy_value = uniform(params.copy_min, params.copy_max);

  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t k = 0; k < params.history; ++k) {
    const double back = static_cast<double>(params.history - 1 - k);
    double v = v0 - ep.accel * back * params.dt;
    if (params.speed_noise > 0.0) v += params.speed_noise * noise(rng);
    ep.history_speeds.push_back(v);
  }

  std::array<double, 2> p{0.0, 0.0};
  for (std::size_t t = 0; t < params.horizon; ++t) {
    const double v = v0 + ep.accel * static_cast<double>(t) * params.dt;
    const double theta = ep.yaw_rate * static_cast<double>(t) * params.dt;
    ep.future_speeds.push_back(v);
    ep.future_headings.push_back(theta);
    p = {p[0] + v * params.dt * std::cos(theta), p[1] + v * params.dt * std::sin(theta)};
    ep.waypoints.push_back(p);
  }
  ep.next_speed = v0 + ep.accel * params.dt;
  ep.observation = {ep.yaw_rate, ep.yaw_rate * params.dt,
                    std::cos(ep.yaw_rate * static_cast<double>(params.horizon) * params.dt), 1.0};
  return ep;
}

data::DialogueRecord episode_dialogue(const Episode& ep, Task task, std::string id) {
  data::DialogueRecord r;
  r.id = std::move(id);
  r.task = std::string(task_name(task));
  r.policy_id = "drive-v1";
  std::string user, answer;
  switch (task) {
    case Task::speed: {
      user = std::string(text::kImagePlaceholder) + " Speeds";
      for (std::size_t i = 0; i < ep.history_speeds.size(); ++i) {
        user += (i ? ", " : " ") + num(ep.history_speeds[i]);
      }
      user += " m/s. Next speed?";
      answer = num(ep.next_speed) + " m/s";
      r.obs = {ep.observation};
      break;
    }
    case Task::traj: {
      user = std::string(text::kImagePlaceholder) + " Speed " + num(ep.history_speeds.back()) + " m/s, yaw rate " +
             num(ep.yaw_rate / kDegToRad) + " deg/s, accel " + num(ep.accel) + ". Plan " +
             std::to_string(ep.waypoints.size()) + " waypoints.";
      for (std::size_t t = 0; t < ep.waypoints.size(); ++t) {
        answer += (t ? " (" : "(") + num(ep.waypoints[t][0]) + ", " + num(ep.waypoints[t][1]) + ")";
      }
      r.obs = {ep.observation};
      break;
    }
    case Task::copy: {
      user = "Repeat " + num(ep.copy_value);
      answer = num(ep.copy_value);
      break;
    }
  }
  r.turns = {{text::Role::user, user}, {text::Role::assistant, answer}};
  return r;
}

std::size_t answer_number_count(Task task, const EpisodeParams& params) {
  return task == Task::traj ? 2 * params.horizon : 1;
}

std::uint64_t split_seed(std::uint64_t base_seed, bool test, std::size_t index) {
  if (index >= (1ULL << 31)) throw ConfigError("split index out of range");
  return (base_seed << 32) | (test ? (1ULL << 31) : 0ULL) | static_cast<std::uint64_t>(index);
}

std::vector<data::DialogueRecord> make_records(Task task, std::size_t n, std::uint64_t base_seed, bool test,
                                               EpisodeParams params) {
  std::vector<data::DialogueRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    params.seed = split_seed(base_seed, test, i);
    const auto ep = generate_episode(params);
    out.push_back(data::with_encoding(
        episode_dialogue(ep, task, std::string(task_name(task)) + (test ? "-test-" : "-train-") + std::to_string(i))));
  }
  return out;
}

SplitInfo make_split(Task task, std::size_t n_train, std::size_t n_test, std::uint64_t base_seed,
                     const std::filesystem::path& out_dir, EpisodeParams params) {
  params.validate();
  SplitInfo info;
  for (std::size_t i = 0; i < n_train; ++i) info.train_seeds.push_back(split_seed(base_seed, false, i));
  for (std::size_t i = 0; i < n_test; ++i) info.test_seeds.push_back(split_seed(base_seed, true, i));
  info.train_path = out_dir / "train.jsonl";
  info.test_path = out_dir / "test.jsonl";
  info.manifest_path = out_dir / "data_manifest.json";
  data::write_jsonl(info.train_path, make_records(task, n_train, base_seed, false, params));
  data::write_jsonl(info.test_path, make_records(task, n_test, base_seed, true, params));

  nlohmann::json m{{"task", task_name(task)},
                   {"n_train", n_train},
                   {"n_test", n_test},
                   {"base_seed", base_seed},
                   {"horizon", params.horizon},
                   {"history", params.history},
                   {"dt", params.dt},
                   {"speed_min", params.speed_min},
                   {"speed_max", params.speed_max},
                   {"max_yaw_rate_deg", params.max_yaw_rate},
                   {"accel_min", params.accel_min},
                   {"accel_max", params.accel_max},
                   {"speed_noise", params.speed_noise},
                   {"copy_min", params.copy_min},
                   {"copy_max", params.copy_max}};
  std::ofstream out(info.manifest_path, std::ios::trunc);
  out << m.dump(2) << '\n';
  return info;
}

}  // namespace numlm::synth
