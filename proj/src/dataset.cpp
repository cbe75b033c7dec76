#include "cdt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cdt/error.hpp"

namespace cdt {

namespace {

using nlohmann::json;

constexpr const char* kFormatName = "cdt-trajectories";
constexpr int kFormatVersion = 1;

bool close_enough(double a, double b) {
  const double scale = std::max({1.0, std::abs(a), std::abs(b)});
  return std::abs(a - b) <= 1e-9 * scale;
}

void check_rtg_channel(const Vector& rtg, const Vector& per_step, bool augmented,
                       const char* name) {
  const std::size_t T = per_step.size();
  if (rtg.size() != T) {
    throw DatasetError(std::string(name) + " length " + std::to_string(rtg.size()) +
                       " != " + std::to_string(T));
  }
  for (std::size_t t = 0; t + 1 < T; ++t) {
    if (!close_enough(rtg[t] - rtg[t + 1], per_step[t])) {
      throw DatasetError(std::string(name) + " increment mismatch at step " + std::to_string(t));
    }
  }
  if (!augmented && !close_enough(rtg[T - 1], per_step[T - 1])) {
    throw DatasetError(std::string(name) + " final entry does not equal the last per-step value");
  }
}

bool all_finite(const Vector& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vector suffix_sums(const Vector& v) {
  Vector out(v.size());
  double acc = 0.0;
  for (std::size_t i = v.size(); i-- > 0;) {
    acc += v[i];
    out[i] = acc;
  }
  return out;
}

json trajectory_to_json(const Trajectory& t) {
  json j;
  j["observations"] = t.states;
  j["actions"] = t.actions;
  j["rewards"] = t.rewards;
  j["costs"] = t.costs;
  if (t.rtg_reward) j["rtg_rewards"] = *t.rtg_reward;
  if (t.rtg_cost) j["rtg_costs"] = *t.rtg_cost;
  j["augmented"] = t.is_augmented;
  return j;
}

template <typename T>
T require(const json& j, const char* key) {
  if (!j.contains(key)) throw DatasetError(std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DatasetError(std::string("key '") + key + "' has the wrong type");
  }
}

Trajectory trajectory_from_json(const json& j) {
  if (!j.is_object()) throw DatasetError("record is not a JSON object");
  Trajectory t;
  t.states = require<std::vector<Vector>>(j, "observations");
  t.actions = require<std::vector<Vector>>(j, "actions");
  t.rewards = require<Vector>(j, "rewards");
  t.costs = require<Vector>(j, "costs");
  if (j.contains("rtg_rewards")) t.rtg_reward = require<Vector>(j, "rtg_rewards");
  if (j.contains("rtg_costs")) t.rtg_cost = require<Vector>(j, "rtg_costs");
  if (j.contains("augmented")) t.is_augmented = require<bool>(j, "augmented");
  return t;
}

}  // namespace

void Trajectory::validate() const {
  const std::size_t T = rewards.size();
  if (T == 0) throw DatasetError("trajectory is empty");
  if (costs.size() != T) {
    throw DatasetError("costs length " + std::to_string(costs.size()) + " != rewards length " +
                       std::to_string(T));
  }
  if (states.size() != T) {
    throw DatasetError("observations length " + std::to_string(states.size()) +
                       " != rewards length " + std::to_string(T));
  }
  if (actions.size() != T) {
    throw DatasetError("actions length " + std::to_string(actions.size()) +
                       " != rewards length " + std::to_string(T));
  }
  const std::size_t ds = states.front().size();
  const std::size_t da = actions.front().size();
  for (std::size_t t = 0; t < T; ++t) {
    if (states[t].size() != ds) throw DatasetError("ragged observation at step " + std::to_string(t));
    if (actions[t].size() != da) throw DatasetError("ragged action at step " + std::to_string(t));
    if (!all_finite(states[t]) || !all_finite(actions[t])) {
      throw DatasetError("non-finite observation/action at step " + std::to_string(t));
    }
    if (!std::isfinite(rewards[t]) || !std::isfinite(costs[t])) {
      throw DatasetError("non-finite reward/cost at step " + std::to_string(t));
    }
    if (costs[t] < 0.0) throw DatasetError("negative cost at step " + std::to_string(t));
  }
  if (rtg_reward.has_value() != rtg_cost.has_value()) {
    throw DatasetError("rtg_rewards and rtg_costs must be present together");
  }
  if (rtg_reward) {
    check_rtg_channel(*rtg_reward, rewards, is_augmented, "rtg_rewards");
    check_rtg_channel(*rtg_cost, costs, is_augmented, "rtg_costs");
  }
}

TrajectoryDataset::TrajectoryDataset(std::vector<Trajectory> trajectories)
    : trajectories_(std::move(trajectories)) {
  points_.reserve(trajectories_.size());
  for (std::size_t i = 0; i < trajectories_.size(); ++i) {
    const auto& t = trajectories_[i];
    try {
      t.validate();
      if (t.state_dim() != trajectories_.front().state_dim() ||
          t.action_dim() != trajectories_.front().action_dim()) {
        throw DatasetError("state/action dimensions differ from trajectory 0");
      }
    } catch (const DatasetError& e) {
      throw DatasetError("trajectory " + std::to_string(i) + ": " + e.what());
    }
    points_.push_back(episodic_returns(t));
  }
}

TrajectoryDataset TrajectoryDataset::with_appended(std::span<const Trajectory> extra) const {
  std::vector<Trajectory> all = trajectories_;
  all.insert(all.end(), extra.begin(), extra.end());
  return TrajectoryDataset(std::move(all));
}

TrajectoryDataset TrajectoryDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<Trajectory> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(trajectories_.at(i));
  return TrajectoryDataset(std::move(out));
}

TrajectoryDataset TrajectoryDataset::with_returns_to_go() const {
  std::vector<Trajectory> out;
  out.reserve(trajectories_.size());
  for (const auto& t : trajectories_) out.push_back(t.has_rtg() ? t : returns_to_go(t));
  return TrajectoryDataset(std::move(out));
}

MetricConfig MetricConfig::from_dataset(const TrajectoryDataset& ds, double kappa,
                                        double eps_stability) {
  if (ds.empty()) throw DatasetError("cannot derive metric extrema from an empty dataset");
  MetricConfig cfg;
  cfg.kappa = kappa;
  cfg.eps_stability = eps_stability;
  const auto pts = ds.return_points();
  const auto [lo, hi] = std::minmax_element(
      pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.reward < b.reward; });
  cfg.r_min = lo->reward;
  cfg.r_max = hi->reward;
  return cfg;
}

ReturnPoint episodic_returns(const Trajectory& traj) {
  return {std::accumulate(traj.rewards.begin(), traj.rewards.end(), 0.0),
          std::accumulate(traj.costs.begin(), traj.costs.end(), 0.0)};
}

Trajectory returns_to_go(const Trajectory& traj) {
  Trajectory out = traj;
  out.rtg_reward = suffix_sums(traj.rewards);
  out.rtg_cost = suffix_sums(traj.costs);
  return out;
}

double normalize_reward(double reward_return, const MetricConfig& cfg) {
  if (!(cfg.r_max > cfg.r_min)) {
    throw DatasetError("uninformative dataset: r_max (" + std::to_string(cfg.r_max) +
                       ") must exceed r_min (" + std::to_string(cfg.r_min) + ")");
  }
  return (reward_return - cfg.r_min) / (cfg.r_max - cfg.r_min) * 100.0;
}

double normalize_cost(double cost_return, const MetricConfig& cfg) {
  return cost_return / (cfg.kappa + cfg.eps_stability);
}

std::string dataset_to_ndjson(const TrajectoryDataset& ds) {
  std::ostringstream out;
  json header = {{"format", kFormatName}, {"version", kFormatVersion}, {"count", ds.size()}};
  out << header.dump() << '\n';
  for (const auto& t : ds.trajectories()) {
    if (!all_finite(t.rewards) || !all_finite(t.costs)) {
      throw DatasetError("cannot serialize non-finite values");
    }
    out << trajectory_to_json(t).dump() << '\n';
  }
  return out.str();
}

TrajectoryDataset dataset_from_ndjson(const std::string& text) {
  if (text.empty()) throw DatasetError("line 1: missing header");
  if (text.back() != '\n') throw DatasetError("missing trailing newline");

  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception&) {
    throw DatasetError("line 1: header is not valid JSON");
  }
  if (!header.is_object() || header.value("format", "") != kFormatName) {
    throw DatasetError("line 1: not a " + std::string(kFormatName) + " file");
  }
  if (header.value("version", 0) != kFormatVersion) {
    throw DatasetError("line 1: unsupported version");
  }

  std::vector<Trajectory> trajectories;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t record = trajectories.size();
    const std::string where =
        "record " + std::to_string(record) + " (line " + std::to_string(line_no) + "): ";
    try {
      auto t = trajectory_from_json(json::parse(line));
      t.validate();
      trajectories.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw DatasetError(where + "malformed JSON: " + e.what());
    } catch (const DatasetError& e) {
      throw DatasetError(where + e.what());
    }
  }
  if (header.contains("count") && header["count"].get<std::size_t>() != trajectories.size()) {
    throw DatasetError("header count " + header["count"].dump() + " != " +
                       std::to_string(trajectories.size()) + " records");
  }
  return TrajectoryDataset(std::move(trajectories));
}

void save_dataset(const TrajectoryDataset& ds, const std::filesystem::path& path) {
  const std::string text = dataset_to_ndjson(ds);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw DatasetError("write failed: " + path.string());
}

TrajectoryDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("dataset not found: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return dataset_from_ndjson(buf.str());
  } catch (const DatasetError& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
}

}  // namespace cdt
