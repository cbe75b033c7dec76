#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdt/dataset.hpp"
#include "cdt/nn/array.hpp"
#include "cdt/nn/checkpoint.hpp"
#include "cdt/random.hpp"

namespace cdt {

enum class HeadMode { Gaussian, Deterministic };

std::string to_string(HeadMode mode);
HeadMode head_mode_from_string(const std::string& name);

struct CdtConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t embed_dim = 64;
  std::size_t context_len = 10;
  std::size_t state_dim = 4;
  std::size_t action_dim = 2;
  double dropout = 0.1;
  std::size_t max_episode_len = 1000;
  HeadMode head_mode = HeadMode::Gaussian;
  double log_std_min = -5.0;
  double log_std_max = 2.0;
  // Actions are bounded to [-action_bound, action_bound].
  double action_bound = 1.0;
  // Return-to-go tokens are divided by these before embedding.
  double reward_scale = 1.0;
  double cost_scale = 1.0;

  static CdtConfig desk();
  static CdtConfig paper();
  static CdtConfig preset(const std::string& name);

  void validate() const;
  nlohmann::json to_json() const;
  static CdtConfig from_json(const nlohmann::json& j);

  bool operator==(const CdtConfig&) const = default;
};

// The conditioning context for one prediction: the last L timesteps of
// (reward-to-go, cost-to-go, state, action). Left padding is marked invalid
// and carries zeros.
struct TokenWindow {
  Vector rtg_reward;
  Vector rtg_cost;
  std::vector<Vector> states;
  std::vector<Vector> actions;
  std::vector<std::size_t> timesteps;
  std::vector<std::uint8_t> valid;

  std::size_t length() const { return rtg_reward.size(); }
  std::size_t valid_count() const;
  // Throws ModelError on inconsistent sizes or non-increasing valid timesteps.
  void validate(std::size_t state_dim, std::size_t action_dim) const;
};

// Window over the last min(K, end) steps of `traj` ending at step `end`
// (1-based, inclusive), left-padded to K. Requires RTG channels.
TokenWindow window_from_trajectory(const Trajectory& traj, std::size_t end, std::size_t K);

// Same valid content with `extra` more padded positions on the left.
TokenWindow pad_left(const TokenWindow& w, std::size_t extra);

struct GaussianAction {
  Vector mean;
  Vector log_std;  // empty for the deterministic head
};

struct ForwardOutput {
  nn::Var mean;     // (B*L x action_dim), row b*L + k
  nn::Var log_std;  // null for the deterministic head
  std::size_t batch = 0;
  std::size_t length = 0;
};

// Returns-conditioned causal transformer policy. Per timestep it emits four
// tokens (R, C, s, a), each a linear embedding of the raw value plus a shared
// timestep embedding, and reads the action distribution at the s token.
class CdtModel {
 public:
  CdtModel(const CdtConfig& cfg, std::uint64_t seed);

  const CdtConfig& config() const { return cfg_; }
  std::span<const nn::Var> parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  const nn::Var& parameter(const std::string& name) const;
  std::size_t parameter_count() const;

  // Raw token embeddings (B*4L x D) before the embedding layer norm.
  nn::Var tokenize(nn::Tape& t, std::span<const TokenWindow> windows) const;

  ForwardOutput forward(nn::Tape& t, std::span<const TokenWindow> windows, bool train,
                        Rng& rng) const;

  // Per-timestep action distributions for a single window, dropout off.
  std::vector<GaussianAction> distributions(const TokenWindow& window) const;

  nn::Checkpoint to_checkpoint() const;
  static CdtModel from_checkpoint(const nn::Checkpoint& ckpt);
  void save(const std::filesystem::path& path) const;
  static CdtModel load(const std::filesystem::path& path);

 private:
  CdtModel() = default;
  nn::Var& add_param(const std::string& name, nn::Matrix value);
  void check_windows(std::span<const TokenWindow> windows) const;

  CdtConfig cfg_;
  std::vector<nn::Var> params_;
  std::vector<std::string> names_;
};

struct LossTerms {
  nn::Var total;
  double nll = 0.0;      // Gaussian NLL, or MSE for the deterministic head
  double entropy = 0.0;  // mean differential entropy (0 for the deterministic head)
};

// Mean over windows and valid positions of -log pi(a|o) - lambda_ent * H.
// The deterministic head uses mean squared error and ignores lambda_ent.
// `targets` is (B*L x action_dim), row b*L + k.
LossTerms compute_loss(nn::Tape& t, const CdtModel& model, std::span<const TokenWindow> windows,
                       const nn::Matrix& targets, double lambda_ent, bool train, Rng& rng);

// Action targets taken from the windows' own action slots.
nn::Matrix targets_from_windows(std::span<const TokenWindow> windows, std::size_t action_dim);

enum class PredictMode { Mean, Sample };

std::string to_string(PredictMode mode);
PredictMode predict_mode_from_string(const std::string& name);

// Action for the last position of the window.
Vector predict(const CdtModel& model, const TokenWindow& window, PredictMode mode, Rng& rng);

}  // namespace cdt
