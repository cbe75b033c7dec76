#include <doctest.h>

#include <cmath>
#include <limits>

#include "cdt/envs.hpp"
#include "cdt/error.hpp"

using namespace cdt;

TEST_SUITE("envs") {
  TEST_CASE("run reward is progress toward the goal") {
    RunSpec spec;
    spec.goal_x = 10;
    spec.goal_y = 0;
    PointState a, b;
    b.x = 1;
    CHECK(run_reward(a, b, spec) == 1);
    CHECK(run_reward(a, a, spec) == 0);

    // Tangential move on the goal-centred circle of radius 10.
    PointState c;
    c.x = 10 - 10 * std::cos(0.01);
    c.y = 10 * std::sin(0.01);
    CHECK(run_reward(a, c, spec) == doctest::Approx(0.0).epsilon(1e-12));
    PointState d;
    d.x = 3;
    d.y = 4;
    const double expected = 10.0 - std::sqrt(49.0 + 16.0);
    CHECK(run_reward(a, d, spec) == doctest::Approx(expected).epsilon(1e-15));
  }

  TEST_CASE("run cost is a clamped violation indicator") {
    RunSpec spec;
    PointState s;
    CHECK(run_cost(s, spec) == 0);
    s.y = spec.y_lim * 1.5;
    CHECK(run_cost(s, spec) == 1);
    s.vx = spec.v_lim * 2;
    CHECK(run_cost(s, spec) == 1);
    s.y = 0;
    CHECK(run_cost(s, spec) == 1);
    s.vx = spec.v_lim;
    CHECK(run_cost(s, spec) == 0);
  }

  TEST_CASE("circle reward") {
    CircleSpec spec;
    spec.radius = 1;
    PointState s;
    s.x = 1;
    s.vy = 1;
    CHECK(circle_reward(s, spec) == 1);
    s.vy = -1;
    CHECK(circle_reward(s, spec) == -1);
    s.vy = 0;
    CHECK(circle_reward(s, spec) == 0);
    s.x = 0.3;
    s.y = -2;
    s.vx = 0.7;
    s.vy = 0.2;
    const double r = circle_reward(s, spec);
    s.vx = -0.7;
    s.vy = -0.2;
    CHECK(circle_reward(s, spec) == -r);
  }

  TEST_CASE("circle cost uses a strict boundary") {
    CircleSpec spec;
    PointState s;
    s.x = spec.x_lim;
    CHECK(circle_cost(s, spec) == 0);
    s.x = 2 * spec.x_lim;
    CHECK(circle_cost(s, spec) == 1);
    s.x = -2 * spec.x_lim;
    CHECK(circle_cost(s, spec) == 1);
  }

  TEST_CASE("default specs are consistent") {
    CircleSpec c;
    CHECK(c.x_lim < c.radius);
    CHECK(env_name(make_env("point-circle")) == "point-circle");
    CHECK(env_name(make_env("point-run")) == "point-run");
    CHECK_THROWS_AS(make_env("ant-run"), EnvError);
  }

  TEST_CASE("integration") {
    RunSpec spec;
    PointState s;
    auto r = step(s, {0, 0}, spec);
    CHECK(r.next_state.x == 0);
    CHECK(r.next_state.y == 0);
    CHECK(r.next_state.step_index == 1);

    r = step(s, {1, 0}, spec);
    const double dt = spec.dynamics.dt;
    CHECK(r.next_state.vx == doctest::Approx(dt));
    CHECK(r.next_state.x == doctest::Approx(dt * dt));
    CHECK(r.next_state.vy == 0);

    // Actions are clipped to the acceleration bound.
    r = step(s, {50, -50}, spec);
    CHECK(r.next_state.vx == doctest::Approx(spec.dynamics.accel_max * dt));
    CHECK(r.next_state.vy == doctest::Approx(-spec.dynamics.accel_max * dt));
  }

  TEST_CASE("episodes end exactly at the episode length") {
    CircleSpec spec;
    spec.episode_len = 17;
    PointState s;
    for (std::size_t t = 0; t < 17; ++t) {
      const auto r = step(s, {0.3, -0.2}, spec);
      CHECK(r.done == (t + 1 == 17));
      CHECK((r.cost == 0 || r.cost == 1));
      s = r.next_state;
    }
    CHECK(s.step_index == 17);
    CHECK_THROWS_AS(step(s, {0, 0}, spec), EnvError);
  }

  TEST_CASE("steps are deterministic and reject non-finite actions") {
    EnvSpec spec = RunSpec{};
    PointState s;
    s.x = 0.3;
    s.vy = 0.4;
    const auto a = step(s, {0.2, 0.9}, spec);
    const auto b = step(s, {0.2, 0.9}, spec);
    CHECK(a.next_state == b.next_state);
    CHECK(a.reward == b.reward);
    CHECK_THROWS_AS(step(s, {std::numeric_limits<double>::quiet_NaN(), 0}, spec), EnvError);
  }

  TEST_CASE("reset is seeded") {
    EnvSpec spec = CircleSpec{};
    Rng a(5), b(5);
    CHECK(reset(spec, a) == reset(spec, b));
    CHECK(reset(spec, a).step_index == 0);
    CHECK(observe(reset(spec, a)).size() == kObservationDim);
  }
}
