#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "cdt/dataset.hpp"
#include "cdt/envs.hpp"
#include "cdt/random.hpp"

namespace cdt {

struct ControllerGains {
  // Velocity tracking gain; 1/dt gives one-step tracking when unsaturated.
  double speed = 10.0;
  // Run: lateral velocity command per metre of y error.
  double lateral = 1.0;
  // Circle: radial velocity command per unit of normalized ellipse error.
  double radial = 1.5;
};

// Stand-in for a constrained RL behaviour policy. `risk` in [0, 1] moves the
// controller from a conservative operating point to one that routinely
// violates the constraint.
struct ScriptedPolicy {
  double risk = 0.0;
  ControllerGains gains{};
  double noise_scale = 0.0;
  // Relative increase of the commanded speed / excursion at risk = 1.
  double margin = 0.5;
  // Once the episode's cost return reaches this, the controller drops to risk 0.
  double cost_budget = std::numeric_limits<double>::infinity();
};

struct PidState {
  double kp = 0.1;
  double ki = 0.003;
  double kd = 0.001;
  double integral = 0.0;
  double prev_error = 0.0;
};

struct PidUpdate {
  double lambda = 0.0;
  PidState state;
};

// lambda = kP e + kI max{0, sum e} + kD max{0, e - e_prev}
PidUpdate pid_lambda_update(const PidState& pid, double error);

Action scripted_action(const ScriptedPolicy& policy, const PointState& state, const RunSpec& spec,
                       Rng& rng);
Action scripted_action(const ScriptedPolicy& policy, const PointState& state,
                       const CircleSpec& spec, Rng& rng);
Action scripted_action(const ScriptedPolicy& policy, const PointState& state, const EnvSpec& spec,
                       Rng& rng);

// One episode of `policy` from a seeded reset; RTG channels are filled in.
Trajectory run_episode(const ScriptedPolicy& policy, const EnvSpec& spec, Rng& rng);

struct CollectOptions {
  double noise_scale = 0.1;
  double margin = 0.5;
  ControllerGains gains{};
  // Extra episodes at budget_risk that retreat to risk 0 once they have spent
  // the given cost, episodes_per_risk per budget.
  std::vector<double> cost_budgets;
  double budget_risk = 1.0;
};

// (|risk_grid| + |cost_budgets|) * episodes_per_risk trajectories; episode
// (i, j) draws from the stream derive_seed(seed, i, j), budgets following the
// risk grid in i.
TrajectoryDataset collect(const EnvSpec& spec, std::span<const double> risk_grid,
                          std::size_t episodes_per_risk, std::uint64_t seed,
                          const CollectOptions& options = {});

}  // namespace cdt
