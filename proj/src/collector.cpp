#include "cdt/collector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cdt/error.hpp"

namespace cdt {

namespace {

// Acceleration that moves the damped velocity toward v_des:
// v' = (1 - d) v + a dt, so a = k (v_des - (1 - d) v) tracks in one step at k = 1/dt.
Action track_velocity(const PointState& s, double vx_des, double vy_des, double damping,
                      double gain) {
  return {gain * (vx_des - (1.0 - damping) * s.vx), gain * (vy_des - (1.0 - damping) * s.vy)};
}

void add_noise(Action& a, double scale, Rng& rng) {
  if (scale <= 0.0) return;
  std::normal_distribution<double> n(0.0, scale);
  a[0] += n(rng);
  a[1] += n(rng);
}

void check_risk(const ScriptedPolicy& p) {
  if (!(p.risk >= 0.0 && p.risk <= 1.0)) throw DomainError("policy risk must lie in [0, 1]");
}

constexpr double kRunWeavePeriod = 8.0;  // seconds

}  // namespace

PidUpdate pid_lambda_update(const PidState& pid, double error) {
  PidUpdate out;
  out.state = pid;
  out.state.integral = std::max(0.0, pid.integral + error);
  out.state.prev_error = error;
  out.lambda = pid.kp * error + pid.ki * out.state.integral +
               pid.kd * std::max(0.0, error - pid.prev_error);
  return out;
}

Action scripted_action(const ScriptedPolicy& policy, const PointState& state, const RunSpec& spec,
                       Rng& rng) {
  check_risk(policy);
  // Speed pulses above the cruise speed; the pulse amplitude (and so the share
  // of time over v_lim) grows with risk. The lateral weave crosses the
  // boundary once risk exceeds ~2/3.
  const double t = static_cast<double>(state.step_index) * spec.dynamics.dt;
  const double phase = std::sin(2.0 * std::numbers::pi * t / kRunWeavePeriod);
  const double v_cmd =
      0.9 * spec.v_lim * (1.0 + policy.risk * policy.margin * 0.5 * (1.0 + phase));
  const double y_cmd = policy.risk * 1.5 * spec.y_lim * phase;
  const double vy_des = policy.gains.lateral * (y_cmd - state.y);
  Action a = track_velocity(state, v_cmd, vy_des, spec.dynamics.damping, policy.gains.speed);
  add_noise(a, policy.noise_scale, rng);
  return a;
}

Action scripted_action(const ScriptedPolicy& policy, const PointState& state,
                       const CircleSpec& spec, Rng& rng) {
  check_risk(policy);
  // Track a counter-clockwise ellipse: full height, half-width growing from
  // 0.7 x_lim with risk, crossing the boundary at risk = 0.15 / margin.
  const double ax = spec.x_lim * (0.7 + 2.0 * policy.risk * policy.margin);
  const double by = spec.radius;
  const double qx = state.x / ax;
  const double qy = state.y / by;
  const double rho = std::hypot(qx, qy);
  const double theta = std::atan2(qy, qx);

  double tx = -ax * std::sin(theta);
  double ty = by * std::cos(theta);
  const double tn = std::hypot(tx, ty);
  tx /= tn;
  ty /= tn;
  double nx = std::cos(theta) / ax;
  double ny = std::sin(theta) / by;
  const double nn = std::hypot(nx, ny);
  nx /= nn;
  ny /= nn;

  const double speed = 0.5 * (1.0 + policy.risk * policy.margin);
  const double radial = policy.gains.radial * (1.0 - rho);
  Action a = track_velocity(state, speed * tx + radial * nx, speed * ty + radial * ny,
                            spec.dynamics.damping, policy.gains.speed);
  add_noise(a, policy.noise_scale, rng);
  return a;
}

Action scripted_action(const ScriptedPolicy& policy, const PointState& state, const EnvSpec& spec,
                       Rng& rng) {
  return std::visit([&](const auto& s) { return scripted_action(policy, state, s, rng); }, spec);
}

Trajectory run_episode(const ScriptedPolicy& policy, const EnvSpec& spec, Rng& rng) {
  Trajectory traj;
  const std::size_t T = episode_length(spec);
  traj.states.reserve(T);
  traj.actions.reserve(T);
  traj.rewards.reserve(T);
  traj.costs.reserve(T);

  const double bound = action_bound(spec);
  PointState s = reset(spec, rng);
  ScriptedPolicy safe = policy;
  safe.risk = 0.0;
  double spent = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    Action a = scripted_action(spent >= policy.cost_budget ? safe : policy, s, spec, rng);
    // Record the action the environment actually applies.
    a[0] = std::clamp(a[0], -bound, bound);
    a[1] = std::clamp(a[1], -bound, bound);
    const StepResult r = step(s, a, spec);
    traj.states.push_back(observe(s));
    traj.actions.push_back({a[0], a[1]});
    traj.rewards.push_back(r.reward);
    traj.costs.push_back(r.cost);
    spent += r.cost;
    s = r.next_state;
  }
  return returns_to_go(traj);
}

TrajectoryDataset collect(const EnvSpec& spec, std::span<const double> risk_grid,
                          std::size_t episodes_per_risk, std::uint64_t seed,
                          const CollectOptions& options) {
  if (risk_grid.empty() && options.cost_budgets.empty()) throw DomainError("collect: risk grid is empty");
  for (double b : options.cost_budgets) {
    if (!(b >= 0.0)) throw DomainError("collect: cost budgets must be non-negative");
  }
  std::vector<ScriptedPolicy> policies;
  for (double risk : risk_grid) {
    policies.push_back({risk, options.gains, options.noise_scale, options.margin});
  }
  for (double b : options.cost_budgets) {
    policies.push_back({options.budget_risk, options.gains, options.noise_scale, options.margin, b});
  }
  std::vector<Trajectory> out;
  out.reserve(policies.size() * episodes_per_risk);
  for (std::size_t i = 0; i < policies.size(); ++i) {
    for (std::size_t j = 0; j < episodes_per_risk; ++j) {
      Rng rng(derive_seed({seed, i, j}));
      out.push_back(run_episode(policies[i], spec, rng));
    }
  }
  return TrajectoryDataset(std::move(out));
}

}  // namespace cdt
