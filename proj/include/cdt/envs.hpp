#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <variant>

#include "cdt/dataset.hpp"
#include "cdt/random.hpp"

namespace cdt {

// Point-mass agent in the plane.
struct PointState {
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  std::size_t step_index = 0;

  bool operator==(const PointState&) const = default;
};

// Shared double-integrator dynamics parameters.
struct Dynamics {
  double dt = 0.1;
  double accel_max = 1.0;
  double damping = 0.05;
  double reset_noise = 0.05;
};

// Run task: progress toward a far goal between two lateral boundaries, with a
// speed limit.
struct RunSpec {
  double goal_x = 100.0;
  double goal_y = 0.0;
  double y_lim = 1.0;
  double v_lim = 1.5;
  Dynamics dynamics{};
  std::size_t episode_len = 200;
};

// Circle task: rewarded for angular progress around a circle of radius r_c,
// inside a vertical safe band |x| <= x_lim narrower than the circle.
struct CircleSpec {
  double radius = 1.0;
  double x_lim = 0.7;
  Dynamics dynamics{};
  std::size_t episode_len = 300;
};

using EnvSpec = std::variant<RunSpec, CircleSpec>;

struct StepResult {
  PointState next_state;
  double reward = 0.0;
  double cost = 0.0;
  bool done = false;
};

using Action = std::array<double, 2>;

inline constexpr std::size_t kObservationDim = 4;
inline constexpr std::size_t kActionDim = 2;

// ||x_prev - g|| - ||x_next - g||
double run_reward(const PointState& prev, const PointState& next, const RunSpec& spec);
// min(1, 1(|y| > y_lim) + 1(||v|| > v_lim))
double run_cost(const PointState& state, const RunSpec& spec);
// (-y vx + x vy) / (1 + | ||x|| - r |)
double circle_reward(const PointState& state, const CircleSpec& spec);
// 1(|x| > x_lim)
double circle_cost(const PointState& state, const CircleSpec& spec);

// Throws EnvError on non-finite actions or when stepping a finished episode.
StepResult step(const PointState& state, const Action& action, const RunSpec& spec);
StepResult step(const PointState& state, const Action& action, const CircleSpec& spec);
StepResult step(const PointState& state, const Action& action, const EnvSpec& spec);

PointState reset(const EnvSpec& spec, Rng& rng);

const Dynamics& dynamics_of(const EnvSpec& spec);
std::size_t episode_length(const EnvSpec& spec);
double action_bound(const EnvSpec& spec);
Vector observe(const PointState& state);

// "point-run" or "point-circle".
std::string env_name(const EnvSpec& spec);
EnvSpec make_env(const std::string& name);

}  // namespace cdt
