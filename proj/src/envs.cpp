#include "cdt/envs.hpp"

#include <algorithm>
#include <cmath>

#include "cdt/error.hpp"

namespace cdt {

namespace {

PointState integrate(const PointState& s, const Action& action, const Dynamics& dyn,
                     std::size_t episode_len) {
  if (!std::isfinite(action[0]) || !std::isfinite(action[1])) {
    throw EnvError("non-finite action at step " + std::to_string(s.step_index));
  }
  if (s.step_index >= episode_len) {
    throw EnvError("episode already finished at step " + std::to_string(s.step_index));
  }
  const double ax = std::clamp(action[0], -dyn.accel_max, dyn.accel_max);
  const double ay = std::clamp(action[1], -dyn.accel_max, dyn.accel_max);
  PointState n;
  n.vx = (1.0 - dyn.damping) * s.vx + ax * dyn.dt;
  n.vy = (1.0 - dyn.damping) * s.vy + ay * dyn.dt;
  n.x = s.x + n.vx * dyn.dt;
  n.y = s.y + n.vy * dyn.dt;
  n.step_index = s.step_index + 1;
  return n;
}

}  // namespace

double run_reward(const PointState& prev, const PointState& next, const RunSpec& spec) {
  return std::hypot(prev.x - spec.goal_x, prev.y - spec.goal_y) -
         std::hypot(next.x - spec.goal_x, next.y - spec.goal_y);
}

double run_cost(const PointState& state, const RunSpec& spec) {
  const int violations = (std::abs(state.y) > spec.y_lim ? 1 : 0) +
                         (std::hypot(state.vx, state.vy) > spec.v_lim ? 1 : 0);
  // The indicator sum can reach 2; recorded costs are binary violation signals.
  return std::min(1, violations);
}

double circle_reward(const PointState& state, const CircleSpec& spec) {
  const double num = -state.y * state.vx + state.x * state.vy;
  return num / (1.0 + std::abs(std::hypot(state.x, state.y) - spec.radius));
}

double circle_cost(const PointState& state, const CircleSpec& spec) {
  return std::abs(state.x) > spec.x_lim ? 1.0 : 0.0;
}

StepResult step(const PointState& state, const Action& action, const RunSpec& spec) {
  StepResult r;
  r.next_state = integrate(state, action, spec.dynamics, spec.episode_len);
  r.reward = run_reward(state, r.next_state, spec);
  r.cost = run_cost(r.next_state, spec);
  r.done = r.next_state.step_index == spec.episode_len;
  return r;
}

StepResult step(const PointState& state, const Action& action, const CircleSpec& spec) {
  StepResult r;
  r.next_state = integrate(state, action, spec.dynamics, spec.episode_len);
  r.reward = circle_reward(r.next_state, spec);
  r.cost = circle_cost(r.next_state, spec);
  r.done = r.next_state.step_index == spec.episode_len;
  return r;
}

StepResult step(const PointState& state, const Action& action, const EnvSpec& spec) {
  return std::visit([&](const auto& s) { return step(state, action, s); }, spec);
}

PointState reset(const EnvSpec& spec, Rng& rng) {
  const double sigma = dynamics_of(spec).reset_noise;
  PointState s;
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    s.x = noise(rng);
    s.y = noise(rng);
  }
  return s;
}

const Dynamics& dynamics_of(const EnvSpec& spec) {
  return std::visit([](const auto& s) -> const Dynamics& { return s.dynamics; }, spec);
}

std::size_t episode_length(const EnvSpec& spec) {
  return std::visit([](const auto& s) { return s.episode_len; }, spec);
}

double action_bound(const EnvSpec& spec) { return dynamics_of(spec).accel_max; }

Vector observe(const PointState& state) { return {state.x, state.y, state.vx, state.vy}; }

std::string env_name(const EnvSpec& spec) {
  return std::holds_alternative<RunSpec>(spec) ? "point-run" : "point-circle";
}

EnvSpec make_env(const std::string& name) {
  if (name == "point-run") return RunSpec{};
  if (name == "point-circle") return CircleSpec{};
  throw EnvError("unknown environment '" + name + "' (expected point-run|point-circle)");
}

}  // namespace cdt
