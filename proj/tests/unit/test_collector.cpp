#include <doctest.h>

#include <algorithm>
#include <vector>

#include "cdt/collector.hpp"
#include "cdt/error.hpp"
#include "cdt/evaluation.hpp"

using namespace cdt;

TEST_SUITE("collector") {
  TEST_CASE("pid update examples") {
    PidState fresh;
    CHECK(pid_lambda_update(fresh, 5).lambda == doctest::Approx(0.52).epsilon(1e-15));
    CHECK(pid_lambda_update(fresh, 0).lambda == 0);

    const auto first = pid_lambda_update(fresh, 5);
    const auto second = pid_lambda_update(first.state, 3);
    // Derivative term vanishes on a falling error: 0.1*3 + 0.003*8.
    CHECK(second.lambda == doctest::Approx(0.3 + 0.024).epsilon(1e-15));
  }

  TEST_CASE("pid integral is clamped at zero") {
    PidState pid;
    for (double e : {2.0, -5.0, -1.0, 0.5, -0.2}) {
      const auto u = pid_lambda_update(pid, e);
      CHECK(u.state.integral >= 0);
      CHECK(u.state.prev_error == e);
      pid = u.state;
    }
    // After sum drops below zero the integral restarts from 0.
    PidState p2;
    p2 = pid_lambda_update(p2, 2).state;
    p2 = pid_lambda_update(p2, -5).state;
    CHECK(p2.integral == 0);
  }

  TEST_CASE("pid reduces to proportional control") {
    PidState pid;
    pid.ki = 0;
    pid.kd = 0;
    for (double e : {1.5, -2.0, 4.0}) {
      const auto u = pid_lambda_update(pid, e);
      CHECK(u.lambda == doctest::Approx(pid.kp * e).epsilon(1e-15));
      pid = u.state;
    }
  }

  TEST_CASE("zero gains give zero action") {
    ScriptedPolicy policy;
    policy.gains = {0, 0, 0};
    Rng rng(1);
    PointState s;
    s.x = 0.3;
    s.vy = 0.2;
    CHECK(scripted_action(policy, s, RunSpec{}, rng) == Action{0, 0});
    CHECK(scripted_action(policy, s, CircleSpec{}, rng) == Action{0, 0});
  }

  TEST_CASE("risk outside the unit interval is rejected") {
    ScriptedPolicy policy;
    policy.risk = 1.5;
    Rng rng(1);
    CHECK_THROWS_AS(scripted_action(policy, PointState{}, RunSpec{}, rng), DomainError);
  }

  TEST_CASE("safe run policy never violates") {
    ScriptedPolicy policy;
    EnvSpec spec = RunSpec{};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const auto t = run_episode(policy, spec, rng);
      CHECK(episodic_returns(t).cost == 0);
      CHECK(t.length() == episode_length(spec));
    }
  }

  TEST_CASE("risky run policy violates") {
    ScriptedPolicy policy;
    policy.risk = 1;
    Rng rng(0);
    CHECK(episodic_returns(run_episode(policy, RunSpec{}, rng)).cost > 0);
  }

  TEST_CASE("collect") {
    const std::vector<double> grid = {0, 0.5, 1};
    CHECK(collect(RunSpec{}, grid, 0, 1).empty());
    CHECK_THROWS_AS(collect(RunSpec{}, std::vector<double>{}, 1, 1), DomainError);

    const auto a = collect(RunSpec{}, grid, 10, 7);
    CHECK(a.size() == 30);
    CHECK(dataset_to_ndjson(a) == dataset_to_ndjson(collect(RunSpec{}, grid, 10, 7)));

    std::vector<double> mean_cost(3, 0.0);
    for (std::size_t i = 0; i < 30; ++i) mean_cost[i / 10] += a.return_points()[i].cost / 10;
    CHECK(mean_cost[0] <= mean_cost[1]);
    CHECK(mean_cost[1] <= mean_cost[2]);
    CHECK(spearman(grid, mean_cost) > 0.99);
    for (const auto& t : a.trajectories()) CHECK_NOTHROW(t.validate());
  }

  TEST_CASE("default circle grid spans several cost levels") {
    const std::vector<double> grid = {0, 0.3, 0.5, 1};
    const auto ds = collect(CircleSpec{}, grid, 3, 0);
    std::vector<double> costs;
    for (const auto& p : ds.return_points()) costs.push_back(p.cost);
    std::sort(costs.begin(), costs.end());
    costs.erase(std::unique(costs.begin(), costs.end()), costs.end());
    CHECK(costs.size() >= 3);
  }

  TEST_CASE("cost budget retreats to the safe controller") {
    const CircleSpec spec;
    ScriptedPolicy risky{1.0, {}, 0.1, 0.5};
    ScriptedPolicy safe{0.0, {}, 0.1, 0.5};
    auto run = [&](const ScriptedPolicy& p) {
      Rng rng(11);
      return run_episode(p, spec, rng);
    };
    // A zero budget is spent before the first step.
    ScriptedPolicy zero = risky;
    zero.cost_budget = 0.0;
    CHECK(run(zero) == run(safe));

    const double unbudgeted = episodic_returns(run(risky)).cost;
    ScriptedPolicy budgeted = risky;
    budgeted.cost_budget = 20.0;
    const double spent = episodic_returns(run(budgeted)).cost;
    CHECK(spent >= 20.0);
    CHECK(spent < unbudgeted);
  }

  TEST_CASE("budgeted episodes follow the risk grid") {
    const std::vector<double> grid = {0, 1};
    CollectOptions opts;
    opts.cost_budgets = {5, 30};
    opts.budget_risk = 0.5;
    const auto plain = collect(CircleSpec{}, grid, 2, 3);
    const auto mixed = collect(CircleSpec{}, grid, 2, 3, opts);
    REQUIRE(mixed.size() == 8);
    for (std::size_t i = 0; i < 4; ++i) CHECK(mixed[i] == plain[i]);
    CHECK(mixed.return_points()[4].cost >= 5);
    CHECK(mixed.return_points()[6].cost >= 30);
    // Budgets alone are enough.
    CHECK(collect(CircleSpec{}, std::vector<double>{}, 1, 3, opts).size() == 2);
    opts.cost_budgets = {-1};
    CHECK_THROWS_AS(collect(CircleSpec{}, grid, 1, 3, opts), DomainError);
  }
}
