#include "cdt/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cdt/error.hpp"
#include "cdt/frontier.hpp"

namespace cdt {

namespace {

double draw_uniform(double lo, double hi, Rng& rng) {
  if (!(hi > lo)) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

std::string to_string(AssociationMode mode) {
  switch (mode) {
    case AssociationMode::DeterministicArgmax:
      return "argmax";
    case AssociationMode::SampledNeighborhood:
      return "sampled";
  }
  return "argmax";
}

AssociationMode association_mode_from_string(const std::string& name) {
  if (name == "argmax" || name == "deterministic_argmax") return AssociationMode::DeterministicArgmax;
  if (name == "sampled" || name == "sampled_neighborhood") return AssociationMode::SampledNeighborhood;
  throw DomainError("unknown association mode '" + name + "' (expected argmax|sampled)");
}

double default_r_max_sample(const TrajectoryDataset& ds, double margin) {
  FrontierIndex index(ds.return_points());
  const double top = *index.pf(index.max_cost());
  return top + (margin - 1.0) * std::abs(top);
}

double default_neighborhood_radius(const TrajectoryDataset& ds) {
  const auto pts = ds.return_points();
  if (pts.empty()) return 0.0;
  auto [rlo, rhi] = std::minmax_element(pts.begin(), pts.end(),
                                        [](auto& a, auto& b) { return a.reward < b.reward; });
  auto [clo, chi] = std::minmax_element(pts.begin(), pts.end(),
                                        [](auto& a, auto& b) { return a.cost < b.cost; });
  return 0.05 * std::hypot(rhi->reward - rlo->reward, chi->cost - clo->cost);
}

std::vector<TargetPair> sample_target_pairs(const TrajectoryDataset& ds, const AugmentConfig& cfg,
                                            Rng& rng) {
  std::vector<TargetPair> pairs;
  if (cfg.n_samples == 0) return pairs;
  if (ds.empty()) throw AugmentationError("cannot sample targets from an empty dataset");

  FrontierIndex index(ds.return_points());
  const double c_min = index.min_cost();
  const double c_max = index.max_cost();
  const double r_max = cfg.r_max_sample.value_or(default_r_max_sample(ds, cfg.r_max_margin));

  pairs.reserve(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    const double kappa = draw_uniform(c_min, c_max, rng);
    const double lower = *index.pf(kappa);
    if (r_max < lower) {
      std::ostringstream msg;
      msg << "reward sample max " << r_max << " is below the frontier bound PF(" << kappa
          << ") = " << lower << " at draw " << i;
      throw AugmentationError(msg.str());
    }
    const double rho = draw_uniform(lower, r_max, rng);
    pairs.push_back({rho, kappa});
  }
  return pairs;
}

std::size_t associate_argmax(const TargetPair& pair, const TrajectoryDataset& ds) {
  const auto pts = ds.return_points();
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].cost > pair.kappa) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = pts[*best];
    if (pts[i].reward > b.reward || (pts[i].reward == b.reward && pts[i].cost < b.cost)) best = i;
  }
  if (!best) {
    std::ostringstream msg;
    msg << "no safe trajectory with cost <= " << pair.kappa;
    throw AugmentationError(msg.str());
  }
  return *best;
}

std::size_t associate_sampled(const TargetPair& pair, const TrajectoryDataset& ds,
                              const AugmentConfig& cfg, Rng& rng) {
  if (!(cfg.beta > 0.0)) throw AugmentationError("beta must be positive");
  const std::size_t anchor = associate_argmax(pair, ds);
  const double radius = cfg.neighborhood_radius.value_or(default_neighborhood_radius(ds));
  const auto pts = ds.return_points();
  const ReturnPoint p = pts[anchor];

  std::vector<std::size_t> candidates;
  std::vector<double> weights;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].cost > pair.kappa) continue;
    const double d = std::hypot(pts[i].reward - p.reward, pts[i].cost - p.cost);
    if (i != anchor && d > radius) continue;
    candidates.push_back(i);
    weights.push_back(1.0 / (d + cfg.beta));
  }
  if (candidates.size() == 1) return anchor;

  double total = 0.0;
  for (double w : weights) total += w;
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    acc += weights[k];
    if (u < acc) return candidates[k];
  }
  return candidates.back();
}

Trajectory relabel(const Trajectory& src, const TargetPair& pair) {
  Trajectory out = src.has_rtg() ? src : returns_to_go(src);
  auto& rr = *out.rtg_reward;
  auto& rc = *out.rtg_cost;
  const double dr = pair.rho - rr.front();
  const double dc = pair.kappa - rc.front();
  for (auto& v : rr) v += dr;
  for (auto& v : rc) v += dc;
  rr.front() = pair.rho;
  rc.front() = pair.kappa;
  out.is_augmented = true;
  return out;
}

AugmentResult augment(const TrajectoryDataset& ds, const AugmentConfig& cfg) {
  AugmentResult result;
  result.requested = cfg.n_samples;
  if (cfg.n_samples == 0) {
    result.dataset = ds;
    return result;
  }

  Rng rng(cfg.seed);
  const auto pairs = sample_target_pairs(ds, cfg, rng);

  std::vector<Trajectory> extra;
  extra.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    try {
      std::size_t src = 0;
      if (cfg.mode == AssociationMode::SampledNeighborhood) {
        Rng pair_rng(derive_seed({cfg.seed, 0xa55c1a7eULL, i}));
        src = associate_sampled(pairs[i], ds, cfg, pair_rng);
      } else {
        src = associate_argmax(pairs[i], ds);
      }
      extra.push_back(relabel(ds[src], pairs[i]));
      result.pairs.push_back(pairs[i]);
      result.source_index.push_back(src);
    } catch (const AugmentationError& e) {
      ++result.skipped;
      result.skip_reasons.push_back("sample " + std::to_string(i) + ": " + e.what());
    }
  }
  result.produced = extra.size();
  result.dataset = ds.with_appended(extra);
  return result;
}

}  // namespace cdt
