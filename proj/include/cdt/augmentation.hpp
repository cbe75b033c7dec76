#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cdt/dataset.hpp"
#include "cdt/random.hpp"

namespace cdt {

enum class AssociationMode { DeterministicArgmax, SampledNeighborhood };

std::string to_string(AssociationMode mode);
AssociationMode association_mode_from_string(const std::string& name);

struct AugmentConfig {
  std::size_t n_samples = 0;
  // Upper end of the reward-target range. When unset it defaults to
  // PF(c_max) scaled by r_max_margin.
  std::optional<double> r_max_sample;
  double r_max_margin = 1.25;
  double beta = 1.0;
  // L2 radius in (reward, cost) return space. When unset it defaults to 5% of
  // the diagonal of the dataset's return bounding box.
  std::optional<double> neighborhood_radius;
  AssociationMode mode = AssociationMode::DeterministicArgmax;
  std::uint64_t seed = 0;
};

// An (infeasible or boundary) target: reward return rho at cost budget kappa.
struct TargetPair {
  double rho = 0.0;
  double kappa = 0.0;
  bool operator==(const TargetPair&) const = default;
};

// Reward-target upper bound used when cfg.r_max_sample is unset.
double default_r_max_sample(const TrajectoryDataset& ds, double margin);
double default_neighborhood_radius(const TrajectoryDataset& ds);

// kappa ~ U(c_min, c_max), rho ~ U(PF(kappa), r_max_sample).
std::vector<TargetPair> sample_target_pairs(const TrajectoryDataset& ds, const AugmentConfig& cfg,
                                            Rng& rng);

// argmax R s.t. C <= kappa, ties to lower cost then lower index.
std::size_t associate_argmax(const TargetPair& pair, const TrajectoryDataset& ds);

// Samples a safe trajectory near the argmax point with probability
// proportional to 1 / (||(R_p, C_p) - (R', C')|| + beta).
std::size_t associate_sampled(const TargetPair& pair, const TrajectoryDataset& ds,
                              const AugmentConfig& cfg, Rng& rng);

// Shifts the RTG channels so that they start at (rho, kappa); states and
// actions are copied unchanged.
Trajectory relabel(const Trajectory& src, const TargetPair& pair);

struct AugmentResult {
  TrajectoryDataset dataset;
  std::size_t requested = 0;
  std::size_t produced = 0;
  std::size_t skipped = 0;
  std::vector<TargetPair> pairs;          // per produced trajectory
  std::vector<std::size_t> source_index;  // per produced trajectory
  std::vector<std::string> skip_reasons;
};

AugmentResult augment(const TrajectoryDataset& ds, const AugmentConfig& cfg);

}  // namespace cdt
