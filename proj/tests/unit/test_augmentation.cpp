#include <doctest.h>

#include <cmath>

#include "cdt/augmentation.hpp"
#include "cdt/error.hpp"
#include "cdt/frontier.hpp"
#include "oracles/oracles.hpp"
#include "unit/helpers.hpp"

using namespace cdt;
using testing::from_points;
using testing::make_traj;

TEST_SUITE("augmentation") {
  TEST_CASE("association mode names") {
    CHECK(association_mode_from_string(to_string(AssociationMode::SampledNeighborhood)) ==
          AssociationMode::SampledNeighborhood);
    CHECK(association_mode_from_string("argmax") == AssociationMode::DeterministicArgmax);
    CHECK_THROWS(association_mode_from_string("nearest"));
  }

  TEST_CASE("zero samples") {
    AugmentConfig cfg;
    Rng rng(0);
    CHECK(sample_target_pairs(from_points({{1, 1}}), cfg, rng).empty());
    const auto ds = from_points({{8, 2}, {10, 5}});
    const auto res = augment(ds, cfg);
    CHECK(res.dataset == ds);
    CHECK(res.produced == 0);
  }

  TEST_CASE("target pairs match seeded reference") {
    const auto ds = from_points({{8, 2}, {20, 15}});
    AugmentConfig cfg;
    cfg.n_samples = 25;
    cfg.r_max_sample = 40;
    Rng a(123), b(123);
    const auto got = sample_target_pairs(ds, cfg, a);
    const auto want = oracle::target_pairs(ds.return_points(), 25, 40, b);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].rho == want[i].first);
      CHECK(got[i].kappa == want[i].second);
    }
  }

  TEST_CASE("sampled kappa stays in the cost range") {
    const auto ds = from_points({{8, 2}, {10, 5}, {20, 15}});
    AugmentConfig cfg;
    cfg.n_samples = 10000;
    Rng rng(4);
    const auto pairs = sample_target_pairs(ds, cfg, rng);
    const double r_max = default_r_max_sample(ds, cfg.r_max_margin);
    for (const auto& p : pairs) {
      REQUIRE(p.kappa >= 2);
      REQUIRE(p.kappa <= 15);
      REQUIRE(p.rho >= pf(ds, p.kappa));
      REQUIRE(p.rho <= r_max);
    }
  }

  TEST_CASE("reward upper bound below the frontier is rejected") {
    AugmentConfig cfg;
    cfg.n_samples = 5;
    cfg.r_max_sample = 1;
    Rng rng(0);
    CHECK_THROWS_AS(sample_target_pairs(from_points({{8, 2}, {20, 15}}), cfg, rng), AugmentationError);
  }

  TEST_CASE("argmax association") {
    const auto ds = from_points({{8, 2}, {10, 5}, {20, 15}});
    CHECK(associate_argmax({30, 9}, ds) == 1);
    CHECK_THROWS_AS(associate_argmax({30, 1}, ds), AugmentationError);
    CHECK(associate_argmax({30, 9}, from_points({{10, 5}, {10, 4}})) == 1);
    CHECK(associate_argmax({30, 9}, from_points({{10, 4}, {10, 4}})) == 0);
  }

  TEST_CASE("sampled association") {
    const auto ds = from_points({{8, 2}, {10, 5}, {9.9, 5}, {20, 15}});
    AugmentConfig cfg;
    cfg.neighborhood_radius = 0.0;
    Rng rng(2);
    for (int i = 0; i < 100; ++i) CHECK(associate_sampled({30, 9}, ds, cfg, rng) == 1);

    // Only unsafe neighbours: falls back to the argmax point.
    const auto unsafe = from_points({{10, 5}, {10.1, 5.5}});
    cfg.neighborhood_radius = 10.0;
    for (int i = 0; i < 100; ++i) CHECK(associate_sampled({30, 5.2}, unsafe, cfg, rng) == 0);

    cfg.beta = 0;
    CHECK_THROWS_AS(associate_sampled({30, 9}, ds, cfg, rng), AugmentationError);
  }

  TEST_CASE("sampled association frequencies follow inverse distance") {
    // Anchor (10, 5) at distance 0, candidate (7, 1) at distance 5.
    const auto ds = from_points({{10, 5}, {7, 1}});
    AugmentConfig cfg;
    cfg.beta = 1.0;
    cfg.neighborhood_radius = 6.0;
    Rng rng(99);
    const int n = 100000;
    int anchor = 0;
    for (int i = 0; i < n; ++i) anchor += associate_sampled({30, 6}, ds, cfg, rng) == 0;
    const double p = (1.0 / 1.0) / (1.0 / 1.0 + 1.0 / 6.0);
    const double sigma = std::sqrt(n * p * (1 - p));
    CHECK(std::abs(anchor - n * p) <= 3 * sigma);
  }

  TEST_CASE("relabel shifts rtg channels") {
    auto src = returns_to_go(make_traj({8, 12}, {3, 5}));
    const auto same = relabel(src, {20, 8});
    CHECK(*same.rtg_reward == *src.rtg_reward);
    CHECK(*same.rtg_cost == *src.rtg_cost);
    CHECK(same.is_augmented);

    const auto out = relabel(src, {25, 9});
    CHECK(*out.rtg_reward == Vector{25, 17});
    CHECK(*out.rtg_cost == Vector{9, 6});
    CHECK(out.states == src.states);
    CHECK(out.actions == src.actions);
    CHECK(out.rewards == src.rewards);
    CHECK_NOTHROW(out.validate());
    CHECK_FALSE(src.is_augmented);
  }

  TEST_CASE("relabel computes missing rtg") {
    const auto out = relabel(make_traj({1, 2, 3}, {0, 0, 1}), {10, 4});
    CHECK(*out.rtg_reward == Vector{10, 9, 7});
    CHECK(*out.rtg_cost == Vector{4, 4, 4});
  }

  TEST_CASE("augment pipeline") {
    const auto ds = from_points({{8, 2}, {10, 5}, {20, 15}});
    const auto before = ds;
    AugmentConfig cfg;
    cfg.n_samples = 5;
    cfg.seed = 17;
    const auto res = augment(ds, cfg);
    CHECK(res.dataset.size() == 8);
    CHECK(res.produced == 5);
    CHECK(ds == before);

    Rng replay(17);
    const auto pairs = sample_target_pairs(ds, cfg, replay);
    for (std::size_t i = 0; i < 5; ++i) {
      const auto& t = res.dataset[3 + i];
      CHECK(t.is_augmented);
      CHECK(t.rtg_reward->front() == pairs[i].rho);
      CHECK(t.rtg_cost->front() == pairs[i].kappa);
      CHECK(pairs[i].rho >= pf(ds, pairs[i].kappa));
      const auto& src = ds[res.source_index[i]];
      CHECK(t.states == src.states);
      CHECK(ds.return_points()[res.source_index[i]].cost <= pairs[i].kappa);
    }
  }

  TEST_CASE("augment is reproducible per seed") {
    const auto ds = from_points({{8, 2}, {10, 5}, {9.5, 4}, {20, 15}});
    AugmentConfig cfg;
    cfg.n_samples = 50;
    cfg.seed = 3;
    cfg.mode = AssociationMode::SampledNeighborhood;
    cfg.neighborhood_radius = 3;
    const auto first = augment(ds, cfg);
    CHECK(augment(ds, cfg).dataset == first.dataset);
    cfg.seed = 4;
    CHECK_FALSE(augment(ds, cfg).pairs == first.pairs);
  }
}
