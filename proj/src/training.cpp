#include "cdt/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <malloc.h>
#include <sstream>

#include "cdt/error.hpp"
#include "cdt/nn/optim.hpp"

namespace cdt {

void TrainConfig::validate() const {
  if (batch_size < 1 || context_len < 1) throw TrainingError("batch_size and context_len must be >= 1");
  if (lambda_ent < 0.0) throw TrainingError("lambda_ent must be non-negative");
  if (!(lr > 0.0)) throw TrainingError("lr must be positive");
  if (!(clip_norm > 0.0)) throw TrainingError("clip_norm must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size}, {"grad_steps", grad_steps},
          {"context_len", context_len}, {"lambda_ent", lambda_ent},
          {"lr", lr},                 {"betas", {beta1, beta2}},
          {"clip_norm", clip_norm},   {"seed", seed},
          {"checkpoint_every", checkpoint_every}, {"eval_every", eval_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.grad_steps = j.value("grad_steps", c.grad_steps);
  c.context_len = j.value("context_len", c.context_len);
  c.lambda_ent = j.value("lambda_ent", c.lambda_ent);
  c.lr = j.value("lr", c.lr);
  if (j.contains("betas")) {
    c.beta1 = j["betas"].at(0).get<double>();
    c.beta2 = j["betas"].at(1).get<double>();
  }
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.validate();
  return c;
}

Batch sample_batch(const TrajectoryDataset& ds, std::size_t B, std::size_t K, Rng& rng) {
  if (ds.empty()) throw TrainingError("cannot sample from an empty dataset");
  Batch batch;
  batch.windows.reserve(B);
  std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t i = pick(rng);
    const Trajectory& traj = ds[i];
    if (!traj.has_rtg()) throw TrainingError("trajectory " + std::to_string(i) + " has no RTG channels");
    std::uniform_int_distribution<std::size_t> end(1, traj.length());
    const std::size_t t = end(rng);
    batch.windows.push_back(window_from_trajectory(traj, t, K));
    batch.trajectory_index.push_back(i);
    batch.end_step.push_back(t);
  }
  batch.targets = targets_from_windows(batch.windows, ds.action_dim());
  return batch;
}

std::string batch_fingerprint(const Batch& batch) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (std::size_t b = 0; b < batch.windows.size(); ++b) {
    h = splitmix64(h ^ batch.trajectory_index[b]);
    h = splitmix64(h ^ batch.end_step[b]);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TrainResult train(const TrajectoryDataset& ds, CdtModel& model, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (ds.empty()) throw TrainingError("training dataset is empty");
  if (ds.state_dim() != model.config().state_dim || ds.action_dim() != model.config().action_dim) {
    throw TrainingError("dataset dims do not match model config");
  }
  if (hooks.checkpoint_dir) std::filesystem::create_directories(*hooks.checkpoint_dir);

#ifdef __GLIBC__
  // Keep the large per-step buffers in the heap instead of fresh mmaps.
  mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
#endif
  Rng batch_rng(derive_seed({cfg.seed, 1}));
  Rng dropout_rng(derive_seed({cfg.seed, 2}));
  nn::AdamState adam;
  adam.lr = cfg.lr;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;

  TrainResult result;
  result.trace.reserve(cfg.grad_steps);
  const auto params = model.parameters();
  for (std::size_t step = 1; step <= cfg.grad_steps; ++step) {
    const Batch batch = sample_batch(ds, cfg.batch_size, cfg.context_len, batch_rng);
    nn::Tape tape;
    const LossTerms loss =
        compute_loss(tape, model, batch.windows, batch.targets, cfg.lambda_ent, true, dropout_rng);
    const double total = loss.total->data(0, 0);
    if (!std::isfinite(total)) {
      throw TrainingError("non-finite loss at step " + std::to_string(step) + " (batch " +
                          batch_fingerprint(batch) + ", nll " + std::to_string(loss.nll) + ")");
    }
    nn::zero_grad(params);
    tape.backward(loss.total);
    nn::clip_grad_norm(params, cfg.clip_norm);
    nn::adam_step(adam, params);

    const LossRecord rec{step, loss.nll, loss.entropy, total};
    result.trace.push_back(rec);
    if (hooks.on_step) hooks.on_step(rec);
    if (hooks.checkpoint_dir && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
      const auto path = *hooks.checkpoint_dir / ("step_" + std::to_string(step) + ".ckpt");
      model.save(path);
      result.checkpoints.push_back(path);
    }
    if (hooks.on_eval && cfg.eval_every > 0 && step % cfg.eval_every == 0) hooks.on_eval(step, model);
  }
  return result;
}

std::string loss_trace_csv(const std::vector<LossRecord>& trace) {
  std::ostringstream out;
  out.precision(17);
  out << "step,nll,entropy,total\n";
  for (const auto& r : trace) out << r.step << ',' << r.nll << ',' << r.entropy << ',' << r.total << '\n';
  return out.str();
}

void write_loss_trace(const std::vector<LossRecord>& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw TrainingError("cannot open for writing: " + path.string());
  out << loss_trace_csv(trace);
}

CdtConfig fit_return_scales(const CdtConfig& cfg, const TrajectoryDataset& ds) {
  CdtConfig out = cfg;
  double r = 1.0, c = 1.0;
  for (const auto& p : ds.return_points()) {
    r = std::max(r, std::abs(p.reward));
    c = std::max(c, std::abs(p.cost));
  }
  out.reward_scale = r;
  out.cost_scale = c;
  return out;
}

std::vector<double> smoothed(const std::vector<double>& values, std::size_t window) {
  if (window == 0) window = 1;
  std::vector<double> out(values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    if (i >= window) acc -= values[i - window];
    out[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

}  // namespace cdt
