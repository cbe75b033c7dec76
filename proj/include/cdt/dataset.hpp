#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cdt {

using Vector = std::vector<double>;

// One episode: aligned per-step states, actions, rewards and costs, plus the
// optional return-to-go channels used as conditioning tokens.
struct Trajectory {
  std::vector<Vector> states;
  std::vector<Vector> actions;
  Vector rewards;
  Vector costs;
  std::optional<Vector> rtg_reward;
  std::optional<Vector> rtg_cost;
  bool is_augmented = false;

  std::size_t length() const { return rewards.size(); }
  std::size_t state_dim() const { return states.empty() ? 0 : states.front().size(); }
  std::size_t action_dim() const { return actions.empty() ? 0 : actions.front().size(); }
  bool has_rtg() const { return rtg_reward.has_value() && rtg_cost.has_value(); }

  // Throws DatasetError describing the first violated invariant.
  void validate() const;

  bool operator==(const Trajectory&) const = default;
};

struct ReturnPoint {
  double reward = 0.0;
  double cost = 0.0;
  bool operator==(const ReturnPoint&) const = default;
};

// Immutable ordered collection of trajectories with cached (R, C) points.
class TrajectoryDataset {
 public:
  TrajectoryDataset() = default;
  explicit TrajectoryDataset(std::vector<Trajectory> trajectories);

  std::size_t size() const { return trajectories_.size(); }
  bool empty() const { return trajectories_.empty(); }
  const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }
  std::span<const Trajectory> trajectories() const { return trajectories_; }
  std::span<const ReturnPoint> return_points() const { return points_; }

  std::size_t state_dim() const { return empty() ? 0 : trajectories_.front().state_dim(); }
  std::size_t action_dim() const { return empty() ? 0 : trajectories_.front().action_dim(); }

  // Copy of the trajectories with `extra` appended.
  TrajectoryDataset with_appended(std::span<const Trajectory> extra) const;
  // Copy keeping only the listed indices, in the given order.
  TrajectoryDataset subset(std::span<const std::size_t> indices) const;
  // Copy where every trajectory has its RTG channels filled in.
  TrajectoryDataset with_returns_to_go() const;

  bool operator==(const TrajectoryDataset& other) const {
    return trajectories_ == other.trajectories_;
  }

 private:
  std::vector<Trajectory> trajectories_;
  std::vector<ReturnPoint> points_;
};

struct MetricConfig {
  double kappa = 10.0;
  double eps_stability = 1e-6;
  double r_min = 0.0;
  double r_max = 0.0;

  // Reward extrema taken over the dataset's episodic reward returns.
  static MetricConfig from_dataset(const TrajectoryDataset& ds, double kappa = 10.0,
                                   double eps_stability = 1e-6);
};

ReturnPoint episodic_returns(const Trajectory& traj);

// Copy of `traj` with rtg_reward / rtg_cost set to suffix sums (overwrites).
Trajectory returns_to_go(const Trajectory& traj);

// (R - r_min) / (r_max - r_min) * 100, unclamped. Throws DatasetError when the
// dataset reward extrema coincide.
double normalize_reward(double reward_return, const MetricConfig& cfg);

// C / (kappa + eps_stability).
double normalize_cost(double cost_return, const MetricConfig& cfg);

// Newline-delimited JSON: one header line followed by one trajectory per line.
void save_dataset(const TrajectoryDataset& ds, const std::filesystem::path& path);
TrajectoryDataset load_dataset(const std::filesystem::path& path);

std::string dataset_to_ndjson(const TrajectoryDataset& ds);
TrajectoryDataset dataset_from_ndjson(const std::string& text);

}  // namespace cdt
