#include "cdt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "cdt/error.hpp"

namespace cdt {

std::uint64_t episode_seed(std::uint64_t seed, std::size_t episode) {
  return derive_seed({seed, 0xe7a1ULL, episode});
}

RolloutRecord rollout(const CdtModel& model, const EnvSpec& env, double target_reward,
                      double target_cost, std::uint64_t seed, const RolloutOptions& opts) {
  const CdtConfig& cfg = model.config();
  if (cfg.state_dim != kObservationDim || cfg.action_dim != kActionDim) {
    throw EvaluationError("model dims do not match the environment");
  }
  const std::size_t T = episode_length(env);
  if (T > cfg.max_episode_len) throw EvaluationError("episode longer than the model's timestep table");
  const std::size_t K = cfg.context_len;

  Rng env_rng(derive_seed({seed, 1}));
  Rng policy_rng(derive_seed({seed, 2}));

  RolloutRecord rec;
  rec.seed = seed;
  rec.target_pair = {target_reward, target_cost};
  rec.trace.reserve(T);

  PointState state = reset(env, env_rng);
  double R = target_reward;
  double C = target_cost;
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t n = std::min(K, t + 1);
    TokenWindow w;
    w.rtg_reward.assign(K, 0.0);
    w.rtg_cost.assign(K, 0.0);
    w.states.assign(K, Vector(kObservationDim, 0.0));
    w.actions.assign(K, Vector(kActionDim, 0.0));
    w.timesteps.assign(K, 0);
    w.valid.assign(K, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = K - n + i;
      const std::size_t src = t + 1 - n + i;
      w.valid[k] = 1;
      w.timesteps[k] = src;
      if (src == t) {
        w.rtg_reward[k] = R;
        w.rtg_cost[k] = C;
        w.states[k] = observe(state);
      } else {
        const RolloutStep& h = rec.trace[src];
        w.rtg_reward[k] = h.target_reward;
        w.rtg_cost[k] = h.target_cost;
        w.states[k] = h.state;
        w.actions[k] = h.action;
      }
    }
    const Vector a = predict(model, w, opts.mode, policy_rng);
    if (!std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); })) {
      throw EvaluationError("non-finite action at step " + std::to_string(t) + " (seed " +
                            std::to_string(seed) + ")");
    }
    const StepResult sr = step(state, Action{a[0], a[1]}, env);
    RolloutStep s;
    s.state = observe(state);
    s.action = a;
    s.reward = sr.reward;
    s.cost = sr.cost;
    s.target_reward = R;
    s.target_cost = C;
    rec.trace.push_back(std::move(s));
    rec.realized_reward_return += sr.reward;
    rec.realized_cost_return += sr.cost;
    R -= sr.reward;
    C -= sr.cost;
    if (opts.floor_cost) C = std::max(0.0, C);
    state = sr.next_state;
  }
  return rec;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_std(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

EvalAggregate evaluate(const CdtModel& model, const EnvSpec& env, double target_reward,
                       double target_cost, const EvalParams& params, bool keep_records) {
  if (params.episodes < 1) throw EvaluationError("episodes must be >= 1");
  if (params.seeds.empty()) throw EvaluationError("seed list is empty");
  MetricConfig metric = params.metric;
  metric.kappa = params.cost_threshold.value_or(target_cost);

  EvalAggregate agg;
  std::vector<double> seed_reward, seed_cost;
  for (auto seed : params.seeds) {
    double nr = 0.0, nc = 0.0, r = 0.0, c = 0.0;
    for (std::size_t e = 0; e < params.episodes; ++e) {
      RolloutRecord rec = rollout(model, env, target_reward, target_cost, episode_seed(seed, e), params.rollout);
      nr += normalize_reward(rec.realized_reward_return, metric);
      nc += normalize_cost(rec.realized_cost_return, metric);
      r += rec.realized_reward_return;
      c += rec.realized_cost_return;
      if (keep_records) agg.records.push_back(std::move(rec));
    }
    const double n = static_cast<double>(params.episodes);
    agg.seed_norm_reward.push_back(nr / n);
    agg.seed_norm_cost.push_back(nc / n);
    seed_reward.push_back(r / n);
    seed_cost.push_back(c / n);
  }
  agg.norm_reward_mean = mean_of(agg.seed_norm_reward);
  agg.norm_reward_std = population_std(agg.seed_norm_reward);
  agg.norm_cost_mean = mean_of(agg.seed_norm_cost);
  agg.norm_cost_std = population_std(agg.seed_norm_cost);
  agg.reward_mean = mean_of(seed_reward);
  agg.cost_mean = mean_of(seed_cost);
  agg.n = params.episodes * params.seeds.size();
  return agg;
}

SweepResult sweep_target_cost(const CdtModel& model, const EnvSpec& env,
                              std::span<const double> cost_grid, double fixed_target_reward,
                              const EvalParams& params) {
  if (cost_grid.empty()) throw EvaluationError("empty target-cost grid");
  SweepResult res{"target_cost", fixed_target_reward, {}};
  for (double c : cost_grid) {
    res.rows.push_back({c, fixed_target_reward, c, evaluate(model, env, fixed_target_reward, c, params)});
  }
  return res;
}

SweepResult sweep_target_reward(const CdtModel& model, const EnvSpec& env,
                                std::span<const double> reward_grid, double fixed_target_cost,
                                const EvalParams& params) {
  if (reward_grid.empty()) throw EvaluationError("empty target-reward grid");
  SweepResult res{"target_reward", fixed_target_cost, {}};
  for (double r : reward_grid) {
    res.rows.push_back({r, r, fixed_target_cost, evaluate(model, env, r, fixed_target_cost, params)});
  }
  return res;
}

std::string sweep_csv(const SweepResult& result) {
  std::ostringstream out;
  out.precision(17);
  out << "axis_value,norm_reward_mean,norm_reward_std,norm_cost_mean,norm_cost_std,n,"
         "reward_mean,cost_mean\n";
  for (const auto& row : result.rows) {
    const auto& a = row.agg;
    out << row.axis_value << ',' << a.norm_reward_mean << ',' << a.norm_reward_std << ','
        << a.norm_cost_mean << ',' << a.norm_cost_std << ',' << a.n << ',' << a.reward_mean << ','
        << a.cost_mean << '\n';
  }
  return out.str();
}

void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw EvaluationError("cannot open for writing: " + path.string());
  out << sweep_csv(result);
}

nlohmann::json env_to_json(const EnvSpec& env) {
  const Dynamics& d = dynamics_of(env);
  nlohmann::json j = {{"name", env_name(env)},
                      {"episode_len", episode_length(env)},
                      {"dynamics",
                       {{"dt", d.dt}, {"accel_max", d.accel_max}, {"damping", d.damping},
                        {"reset_noise", d.reset_noise}}}};
  if (const auto* r = std::get_if<RunSpec>(&env)) {
    j["goal"] = {r->goal_x, r->goal_y};
    j["y_lim"] = r->y_lim;
    j["v_lim"] = r->v_lim;
  } else {
    const auto& c = std::get<CircleSpec>(env);
    j["radius"] = c.radius;
    j["x_lim"] = c.x_lim;
  }
  return j;
}

nlohmann::json sweep_metadata(const SweepResult& result, const EnvSpec& env, const EvalParams& params) {
  return {{"axis", result.axis},
          {"fixed_value", result.fixed_value},
          {"env", env_to_json(env)},
          {"episodes", params.episodes},
          {"seeds", params.seeds},
          {"mode", to_string(params.rollout.mode)},
          {"floor_cost", params.rollout.floor_cost},
          {"reward_bounds", {params.metric.r_min, params.metric.r_max}},
          {"cost_normalizer",
           params.cost_threshold ? nlohmann::json(*params.cost_threshold) : nlohmann::json("target_cost")},
          {"eps_stability", params.metric.eps_stability}};
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw EvaluationError("spearman needs two equal series of length >= 2");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace cdt
