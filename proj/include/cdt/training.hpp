#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdt/dataset.hpp"
#include "cdt/model.hpp"
#include "cdt/nn/array.hpp"
#include "cdt/random.hpp"

namespace cdt {

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t grad_steps = 20000;
  std::size_t context_len = 10;
  double lambda_ent = 0.1;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double clip_norm = 0.25;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::size_t eval_every = 0;        // 0 disables the eval callback

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct Batch {
  std::vector<TokenWindow> windows;
  nn::Matrix targets;  // (B*K x action_dim), zero rows at padding
  std::vector<std::size_t> trajectory_index;
  std::vector<std::size_t> end_step;  // 1-based
};

// B windows: trajectory uniform, end step uniform in [1, T], left-padded to K.
Batch sample_batch(const TrajectoryDataset& ds, std::size_t B, std::size_t K, Rng& rng);

// Hex digest identifying a batch's (trajectory, end) picks.
std::string batch_fingerprint(const Batch& batch);

struct LossRecord {
  std::size_t step = 0;
  double nll = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

struct TrainHooks {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(std::size_t step, const CdtModel&)> on_eval;
  std::function<void(const LossRecord&)> on_step;
};

struct TrainResult {
  std::vector<LossRecord> trace;
  std::vector<std::filesystem::path> checkpoints;
};

// M steps of loss, backward, global-norm clipping and Adam on `model` in place.
TrainResult train(const TrajectoryDataset& ds, CdtModel& model, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

void write_loss_trace(const std::vector<LossRecord>& trace, const std::filesystem::path& path);
std::string loss_trace_csv(const std::vector<LossRecord>& trace);

// Copy of cfg with reward_scale and cost_scale set to the largest absolute
// reward and cost returns in ds (at least 1).
CdtConfig fit_return_scales(const CdtConfig& cfg, const TrajectoryDataset& ds);

// Mean of the last `window` entries of `values` ending at index i.
std::vector<double> smoothed(const std::vector<double>& values, std::size_t window);

}  // namespace cdt
