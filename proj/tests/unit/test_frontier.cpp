#include <doctest.h>

#include <algorithm>
#include <random>

#include "cdt/error.hpp"
#include "cdt/frontier.hpp"
#include "oracles/oracles.hpp"
#include "unit/helpers.hpp"

using namespace cdt;
using testing::from_points;

namespace {

const auto kThree = from_points({{8, 2}, {10, 5}, {20, 15}});

std::vector<ReturnPoint> random_points(Rng& rng, std::size_t n) {
  // Small integer grid so that ties and exact cost matches are common.
  std::uniform_int_distribution<int> c(0, 20), r(-10, 30);
  std::vector<ReturnPoint> pts(n);
  for (auto& p : pts) p = {static_cast<double>(r(rng)), static_cast<double>(c(rng))};
  return pts;
}

}  // namespace

TEST_SUITE("frontier") {
  TEST_CASE("pf examples") {
    CHECK(pf(kThree, 10) == 10);
    CHECK(pf(from_points({{5, 3}}), 3) == 5);
    CHECK_THROWS_AS(pf(kThree, 1), UndefinedValueError);
  }

  TEST_CASE("ipf examples") {
    CHECK(ipf(kThree, 10) == 20);
    CHECK(ipf(from_points({{5, 3}}), 3) == 5);
    CHECK_THROWS_AS(ipf(kThree, 16), UndefinedValueError);
  }

  TEST_CASE("rf examples") {
    const auto ds = from_points({{8, 2}, {10, 5}, {12, 5}});
    CHECK(rf(ds, 5) == 12);
    CHECK(rf(from_points({{5, 3}}), 3) == 5);
    CHECK_THROWS_AS(rf(ds, 4), DomainError);
  }

  TEST_CASE("epsilon reducible examples") {
    CHECK(epsilon_reducible(kThree, 10) == -10);
    CHECK(epsilon_reducible(from_points({{8, 2}, {20, 10}}), 10) == 0);
    CHECK(epsilon_reducible(from_points({{10, 2}, {6, 12}}), 10) == 4);
  }

  TEST_CASE("normalized epsilon examples") {
    CHECK(normalized_epsilon(kThree, 10) == -0.5);
    CHECK(normalized_epsilon(from_points({{8, 2}, {20, 10}}), 10) == 0);
    CHECK(normalized_epsilon(from_points({{10, 2}, {6, 12}}), 10) == doctest::Approx(0.4));
    CHECK_THROWS_AS(normalized_epsilon(from_points({{0, 2}, {-1, 12}}), 10), DomainError);
  }

  TEST_CASE("pareto set") {
    CHECK(pareto_set(from_points({{8, 2}, {10, 5}, {20, 15}, {9, 6}})) ==
          std::vector<std::size_t>{0, 1, 2});
    CHECK(pareto_set(from_points({{5, 3}})) == std::vector<std::size_t>{0});
    CHECK(pareto_set(from_points({{5, 3}, {5, 3}})) == std::vector<std::size_t>{0, 1});
  }

  TEST_CASE("empty dataset has no frontier") {
    TrajectoryDataset empty;
    CHECK_THROWS_AS(pf(empty, 1), UndefinedValueError);
    CHECK_THROWS_AS(analyze(empty, 1), Error);
  }

  TEST_CASE("analyze report") {
    const auto r = analyze(kThree, 10);
    CHECK(*r.pf == 10);
    CHECK(*r.ipf == 20);
    CHECK_FALSE(r.rf.has_value());
    CHECK(*r.epsilon == -10);
    CHECK(*r.normalized_epsilon == -0.5);
    CHECK(r.pareto_indices.size() == 3);
    const auto low = analyze(kThree, 1);
    CHECK_FALSE(low.pf.has_value());
    CHECK_FALSE(low.epsilon.has_value());
  }

  TEST_CASE("index agrees with brute force on random sets") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      const auto pts = random_points(rng, 1 + trial * 3);
      FrontierIndex idx(pts);
      for (double k = -1; k <= 21; k += 0.5) {
        CHECK(idx.pf(k) == oracle::pf(pts, k));
        CHECK(idx.ipf(k) == oracle::ipf(pts, k));
        CHECK(idx.rf(k) == oracle::rf(pts, k, kDefaultCostTolerance));
      }
      CHECK(pareto_set(pts) == oracle::pareto(pts));
    }
  }

  TEST_CASE("monotonicity and envelope identities") {
    Rng rng(5);
    const auto pts = random_points(rng, 200);
    FrontierIndex idx(pts);
    std::vector<double> costs;
    for (const auto& p : pts) costs.push_back(p.cost);
    std::sort(costs.begin(), costs.end());
    costs.erase(std::unique(costs.begin(), costs.end()), costs.end());
    for (std::size_t i = 1; i < costs.size(); ++i) {
      CHECK(*idx.pf(costs[i]) >= *idx.pf(costs[i - 1]));
      CHECK(*idx.ipf(costs[i]) <= *idx.ipf(costs[i - 1]));
    }
    for (double k : costs) {
      double below = -1e300, above = -1e300;
      for (double c : costs) {
        if (c <= k) below = std::max(below, *idx.rf(c));
        if (c >= k) above = std::max(above, *idx.rf(c));
      }
      CHECK(*idx.pf(k) == below);
      CHECK(*idx.ipf(k) == above);
    }
  }

  TEST_CASE("grid filter") {
    Rng rng(1);
    GridSpec spec;
    const auto distinct = from_points({{0.5, 0.5}, {1.5, 0.5}, {0.5, 1.5}});
    CHECK(grid_filter(distinct, spec, 1, rng) == distinct);

    std::vector<std::pair<double, double>> same(10, {3.2, 4.1});
    CHECK(grid_filter(from_points(same), spec, 3, rng).size() == 3);
    CHECK_THROWS_AS(grid_filter(distinct, spec, 0, rng), DomainError);
    spec.cost_bin_width = 0;
    CHECK_THROWS_AS(grid_filter(distinct, spec, 1, rng), Error);
  }

  TEST_CASE("grid filter matches seeded reference") {
    Rng gen(9);
    const auto pts = random_points(gen, 400);
    GridSpec spec{3.0, 4.0, 0.5, -1.0};
    Rng a(42), b(42);
    const auto got = grid_filter_indices(pts, spec, 2, a);
    CHECK(got == oracle::grid_filter(pts, spec, 2, b));
    CHECK(std::is_sorted(got.begin(), got.end()));
  }

  TEST_CASE("grid cells are half-open") {
    GridSpec spec{2.0, 2.0, 0.0, 0.0};
    CHECK(grid_cell({0.0, 2.0}, spec) == GridCell{1, 0});
    CHECK(grid_cell({-0.1, 1.999}, spec) == GridCell{0, -1});
  }

  TEST_CASE("density filter") {
    GridSpec spec;
    const auto ds = from_points({{0.1, 0.1}, {0.2, 0.2}, {0.3, 0.3}, {50, 50}});
    CHECK(density_filter(ds, spec, 1) == ds);
    const auto kept = density_filter(ds, spec, 2);
    CHECK(kept.size() == 3);
    CHECK(kept.return_points()[2] == ReturnPoint{0.3, 0.3});
    CHECK(density_filter(TrajectoryDataset{}, spec, 2).empty());
  }
}
