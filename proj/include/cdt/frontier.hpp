#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cdt/dataset.hpp"
#include "cdt/random.hpp"

namespace cdt {

// Frontier functions over the episodic (reward, cost) points of a dataset.
//
//   PF(k)  = max R(tau) s.t. C(tau) <= k      (non-decreasing in k)
//   IPF(k) = max R(tau) s.t. C(tau) >= k      (non-increasing in k)
//   RF(k)  = max R(tau) s.t. C(tau) == k      (only defined on reachable costs)
//
// A dataset is epsilon-reducible at k when PF(k) = IPF(k) + epsilon.

inline constexpr double kDefaultCostTolerance = 1e-9;

struct FrontierReport {
  double kappa = 0.0;
  std::optional<double> pf;
  std::optional<double> ipf;
  std::optional<double> rf;
  std::optional<double> epsilon;
  std::optional<double> normalized_epsilon;
  std::vector<std::size_t> pareto_indices;
};

struct GridSpec {
  double cost_bin_width = 1.0;
  double reward_bin_width = 1.0;
  double origin_cost = 0.0;
  double origin_reward = 0.0;
};

// Sorted view of the return points answering PF/IPF/RF queries in O(log n).
class FrontierIndex {
 public:
  explicit FrontierIndex(std::span<const ReturnPoint> points);

  std::optional<double> pf(double kappa) const;
  std::optional<double> ipf(double kappa) const;
  std::optional<double> rf(double kappa, double tol = kDefaultCostTolerance) const;

  double min_cost() const { return sorted_.front().cost; }
  double max_cost() const { return sorted_.back().cost; }
  double max_reward() const { return prefix_max_.back(); }

 private:
  std::vector<ReturnPoint> sorted_;  // ascending cost
  std::vector<double> prefix_max_;   // max reward over sorted_[0..i]
  std::vector<double> suffix_max_;   // max reward over sorted_[i..n)
};

// Each throws UndefinedValueError when its feasible set is empty; rf throws
// DomainError when kappa is not a reachable cost (within `tol`).
double pf(const TrajectoryDataset& ds, double kappa);
double ipf(const TrajectoryDataset& ds, double kappa);
double rf(const TrajectoryDataset& ds, double kappa, double tol = kDefaultCostTolerance);
double epsilon_reducible(const TrajectoryDataset& ds, double kappa);
double normalized_epsilon(const TrajectoryDataset& ds, double kappa);

// Indices not dominated under the PF ordering (no j with C_j <= C_i and
// R_j > R_i), sorted by ascending cost then index. Co-located points are kept.
std::vector<std::size_t> pareto_set(std::span<const ReturnPoint> points);
std::vector<std::size_t> pareto_set(const TrajectoryDataset& ds);

FrontierReport analyze(const TrajectoryDataset& ds, double kappa,
                       double tol = kDefaultCostTolerance);

// Half-open cell [origin + k*width, origin + (k+1)*width) on each axis.
struct GridCell {
  long long cost_bin = 0;
  long long reward_bin = 0;
  auto operator<=>(const GridCell&) const = default;
};
GridCell grid_cell(const ReturnPoint& p, const GridSpec& spec);

// Keeps at most `max_per_cell` trajectories per cell, chosen uniformly without
// replacement. Output preserves input order.
TrajectoryDataset grid_filter(const TrajectoryDataset& ds, const GridSpec& spec,
                              std::size_t max_per_cell, Rng& rng);
std::vector<std::size_t> grid_filter_indices(std::span<const ReturnPoint> points,
                                             const GridSpec& spec, std::size_t max_per_cell,
                                             Rng& rng);

// Drops trajectories in cells holding fewer than `min_count` trajectories.
TrajectoryDataset density_filter(const TrajectoryDataset& ds, const GridSpec& spec,
                                 std::size_t min_count);
std::vector<std::size_t> density_filter_indices(std::span<const ReturnPoint> points,
                                                const GridSpec& spec, std::size_t min_count);

}  // namespace cdt
