#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cdt/dataset.hpp"
#include "cdt/random.hpp"

namespace testing {

inline cdt::Trajectory make_traj(const cdt::Vector& rewards, const cdt::Vector& costs,
                                 std::size_t state_dim = 4, std::size_t action_dim = 2) {
  cdt::Trajectory t;
  t.rewards = rewards;
  t.costs = costs;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    cdt::Vector s(state_dim), a(action_dim);
    for (std::size_t j = 0; j < state_dim; ++j) s[j] = 0.1 * static_cast<double>(i + j);
    for (std::size_t j = 0; j < action_dim; ++j) a[j] = 0.05 * static_cast<double>(i) - 0.1 * static_cast<double>(j);
    t.states.push_back(s);
    t.actions.push_back(a);
  }
  return t;
}

// One single-step trajectory per (reward, cost) point.
inline cdt::TrajectoryDataset from_points(const std::vector<std::pair<double, double>>& rc) {
  std::vector<cdt::Trajectory> ts;
  for (auto [r, c] : rc) ts.push_back(make_traj({r}, {c}));
  return cdt::TrajectoryDataset(std::move(ts)).with_returns_to_go();
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static std::size_t counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("cdt-test-" + tag + "-" + std::to_string(cdt::splitmix64(reinterpret_cast<std::size_t>(this) + counter++)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace testing
