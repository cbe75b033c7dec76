#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdt/augmentation.hpp"
#include "cdt/dataset.hpp"
#include "cdt/envs.hpp"
#include "cdt/model.hpp"

namespace cdt {

struct RolloutStep {
  Vector state;
  Vector action;
  double reward = 0.0;
  double cost = 0.0;
  double target_reward = 0.0;  // conditioning values fed at this step
  double target_cost = 0.0;
};

struct RolloutRecord {
  double realized_reward_return = 0.0;
  double realized_cost_return = 0.0;
  std::vector<RolloutStep> trace;
  TargetPair target_pair;  // (R_1, C_1)
  std::uint64_t seed = 0;
};

struct RolloutOptions {
  PredictMode mode = PredictMode::Sample;
  // Clamp the cost-to-go target at zero after each subtraction.
  bool floor_cost = true;
};

// Returns-conditioned rollout for exactly the env's episode length.
RolloutRecord rollout(const CdtModel& model, const EnvSpec& env, double target_reward,
                      double target_cost, std::uint64_t seed, const RolloutOptions& opts = {});

struct EvalParams {
  std::size_t episodes = 20;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  RolloutOptions rollout{};
  // Reward normalization bounds. Cost is normalized by the target cost in
  // force for the evaluation, or by cost_threshold when set.
  MetricConfig metric{};
  std::optional<double> cost_threshold;
};

struct EvalAggregate {
  double norm_reward_mean = 0.0;
  double norm_reward_std = 0.0;
  double norm_cost_mean = 0.0;
  double norm_cost_std = 0.0;
  double reward_mean = 0.0;  // raw returns, averaged the same way
  double cost_mean = 0.0;
  std::size_t n = 0;
  std::vector<double> seed_norm_reward;  // per-seed episode means
  std::vector<double> seed_norm_cost;
  std::vector<RolloutRecord> records;  // filled when keep_records is set
};

// Per-seed episode means, then mean and population std across seeds.
EvalAggregate evaluate(const CdtModel& model, const EnvSpec& env, double target_reward,
                       double target_cost, const EvalParams& params, bool keep_records = false);

// Episode seed for (seed, episode) pairs used by evaluate.
std::uint64_t episode_seed(std::uint64_t seed, std::size_t episode);

struct SweepRow {
  double axis_value = 0.0;
  double target_reward = 0.0;
  double target_cost = 0.0;
  EvalAggregate agg;
};

struct SweepResult {
  std::string axis;  // "target_cost" or "target_reward"
  double fixed_value = 0.0;
  std::vector<SweepRow> rows;
};

SweepResult sweep_target_cost(const CdtModel& model, const EnvSpec& env,
                              std::span<const double> cost_grid, double fixed_target_reward,
                              const EvalParams& params);
SweepResult sweep_target_reward(const CdtModel& model, const EnvSpec& env,
                                std::span<const double> reward_grid, double fixed_target_cost,
                                const EvalParams& params);

std::string sweep_csv(const SweepResult& result);
void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path);
nlohmann::json sweep_metadata(const SweepResult& result, const EnvSpec& env, const EvalParams& params);

nlohmann::json env_to_json(const EnvSpec& env);

// Spearman rank correlation with average ranks for ties. NaN when either
// side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

double mean_of(std::span<const double> v);
double population_std(std::span<const double> v);

}  // namespace cdt
