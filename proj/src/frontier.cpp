#include "cdt/frontier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "cdt/error.hpp"

namespace cdt {

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

void require_nonempty(const TrajectoryDataset& ds) {
  if (ds.empty()) throw UndefinedValueError("frontier of an empty dataset is undefined");
}

void check_spec(const GridSpec& spec) {
  if (!(spec.cost_bin_width > 0.0) || !(spec.reward_bin_width > 0.0)) {
    throw DomainError("grid bin widths must be positive");
  }
}

std::map<GridCell, std::vector<std::size_t>> bucket(std::span<const ReturnPoint> points,
                                                   const GridSpec& spec) {
  check_spec(spec);
  std::map<GridCell, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < points.size(); ++i) cells[grid_cell(points[i], spec)].push_back(i);
  return cells;
}

}  // namespace

FrontierIndex::FrontierIndex(std::span<const ReturnPoint> points)
    : sorted_(points.begin(), points.end()) {
  if (sorted_.empty()) throw UndefinedValueError("frontier of an empty dataset is undefined");
  std::sort(sorted_.begin(), sorted_.end(),
            [](const ReturnPoint& a, const ReturnPoint& b) { return a.cost < b.cost; });
  const std::size_t n = sorted_.size();
  prefix_max_.resize(n);
  suffix_max_.resize(n);
  prefix_max_[0] = sorted_[0].reward;
  for (std::size_t i = 1; i < n; ++i) prefix_max_[i] = std::max(prefix_max_[i - 1], sorted_[i].reward);
  suffix_max_[n - 1] = sorted_[n - 1].reward;
  for (std::size_t i = n - 1; i-- > 0;) suffix_max_[i] = std::max(suffix_max_[i + 1], sorted_[i].reward);
}

std::optional<double> FrontierIndex::pf(double kappa) const {
  // First element with cost > kappa.
  auto it = std::upper_bound(sorted_.begin(), sorted_.end(), kappa,
                             [](double k, const ReturnPoint& p) { return k < p.cost; });
  if (it == sorted_.begin()) return std::nullopt;
  return prefix_max_[static_cast<std::size_t>(it - sorted_.begin()) - 1];
}

std::optional<double> FrontierIndex::ipf(double kappa) const {
  // First element with cost >= kappa.
  auto it = std::lower_bound(sorted_.begin(), sorted_.end(), kappa,
                             [](const ReturnPoint& p, double k) { return p.cost < k; });
  if (it == sorted_.end()) return std::nullopt;
  return suffix_max_[static_cast<std::size_t>(it - sorted_.begin())];
}

std::optional<double> FrontierIndex::rf(double kappa, double tol) const {
  auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), kappa - tol,
                             [](const ReturnPoint& p, double k) { return p.cost < k; });
  std::optional<double> best;
  for (auto it = lo; it != sorted_.end() && it->cost <= kappa + tol; ++it) {
    best = best ? std::max(*best, it->reward) : it->reward;
  }
  return best;
}

double pf(const TrajectoryDataset& ds, double kappa) {
  require_nonempty(ds);
  auto v = FrontierIndex(ds.return_points()).pf(kappa);
  if (!v) throw UndefinedValueError("PF undefined: no trajectory with cost <= " + fmt(kappa));
  return *v;
}

double ipf(const TrajectoryDataset& ds, double kappa) {
  require_nonempty(ds);
  auto v = FrontierIndex(ds.return_points()).ipf(kappa);
  if (!v) throw UndefinedValueError("IPF undefined: no trajectory with cost >= " + fmt(kappa));
  return *v;
}

double rf(const TrajectoryDataset& ds, double kappa, double tol) {
  require_nonempty(ds);
  auto v = FrontierIndex(ds.return_points()).rf(kappa, tol);
  if (!v) throw DomainError("RF undefined: cost " + fmt(kappa) + " is not reachable in the dataset");
  return *v;
}

double epsilon_reducible(const TrajectoryDataset& ds, double kappa) {
  return pf(ds, kappa) - ipf(ds, kappa);
}

double normalized_epsilon(const TrajectoryDataset& ds, double kappa) {
  const double eps = epsilon_reducible(ds, kappa);
  const double max_r = FrontierIndex(ds.return_points()).max_reward();
  if (max_r == 0.0) throw DomainError("normalized epsilon undefined: maximum reward return is 0");
  return eps / max_r;
}

std::vector<std::size_t> pareto_set(std::span<const ReturnPoint> points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return points[a].cost < points[b].cost;
  });

  std::vector<std::size_t> keep;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < order.size();) {
    // Group of equal cost: the best reward at or below this cost includes the group.
    std::size_t end = g;
    double group_best = best;
    while (end < order.size() && points[order[end]].cost == points[order[g]].cost) {
      group_best = std::max(group_best, points[order[end]].reward);
      ++end;
    }
    for (std::size_t k = g; k < end; ++k) {
      if (points[order[k]].reward >= group_best) keep.push_back(order[k]);
    }
    best = group_best;
    g = end;
  }
  return keep;
}

std::vector<std::size_t> pareto_set(const TrajectoryDataset& ds) {
  return pareto_set(ds.return_points());
}

FrontierReport analyze(const TrajectoryDataset& ds, double kappa, double tol) {
  require_nonempty(ds);
  FrontierIndex index(ds.return_points());
  FrontierReport report;
  report.kappa = kappa;
  report.pf = index.pf(kappa);
  report.ipf = index.ipf(kappa);
  report.rf = index.rf(kappa, tol);
  if (report.pf && report.ipf) {
    report.epsilon = *report.pf - *report.ipf;
    if (index.max_reward() != 0.0) report.normalized_epsilon = *report.epsilon / index.max_reward();
  }
  report.pareto_indices = pareto_set(ds);
  return report;
}

GridCell grid_cell(const ReturnPoint& p, const GridSpec& spec) {
  return {static_cast<long long>(std::floor((p.cost - spec.origin_cost) / spec.cost_bin_width)),
          static_cast<long long>(std::floor((p.reward - spec.origin_reward) / spec.reward_bin_width))};
}

std::vector<std::size_t> grid_filter_indices(std::span<const ReturnPoint> points,
                                             const GridSpec& spec, std::size_t max_per_cell,
                                             Rng& rng) {
  if (max_per_cell < 1) throw DomainError("grid_filter: max_per_cell must be >= 1");
  std::vector<std::size_t> keep;
  for (auto& [cell, members] : bucket(points, spec)) {
    if (members.size() > max_per_cell) {
      // Partial Fisher-Yates: the first max_per_cell slots become the sample.
      for (std::size_t i = 0; i < max_per_cell; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, members.size() - 1);
        std::swap(members[i], members[pick(rng)]);
      }
      members.resize(max_per_cell);
    }
    keep.insert(keep.end(), members.begin(), members.end());
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

TrajectoryDataset grid_filter(const TrajectoryDataset& ds, const GridSpec& spec,
                              std::size_t max_per_cell, Rng& rng) {
  const auto keep = grid_filter_indices(ds.return_points(), spec, max_per_cell, rng);
  return ds.subset(keep);
}

std::vector<std::size_t> density_filter_indices(std::span<const ReturnPoint> points,
                                                const GridSpec& spec, std::size_t min_count) {
  if (min_count < 1) throw DomainError("density_filter: min_count must be >= 1");
  std::vector<std::size_t> keep;
  for (const auto& [cell, members] : bucket(points, spec)) {
    if (members.size() >= min_count) keep.insert(keep.end(), members.begin(), members.end());
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

TrajectoryDataset density_filter(const TrajectoryDataset& ds, const GridSpec& spec,
                                 std::size_t min_count) {
  const auto keep = density_filter_indices(ds.return_points(), spec, min_count);
  return ds.subset(keep);
}

}  // namespace cdt
