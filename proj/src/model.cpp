#include "cdt/model.hpp"

#include <algorithm>
#include <cmath>

#include "cdt/error.hpp"
#include "cdt/nn/ops.hpp"

namespace cdt {

using nn::Matrix;
using nn::Tape;
using nn::Var;

namespace {

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Matrix zeros(Eigen::Index rows, Eigen::Index cols) { return Matrix::Zero(rows, cols); }
Matrix ones(Eigen::Index rows, Eigen::Index cols) { return Matrix::Ones(rows, cols); }

constexpr double kInitStd = 0.02;

}  // namespace

std::string to_string(HeadMode mode) {
  return mode == HeadMode::Gaussian ? "gaussian" : "deterministic";
}

HeadMode head_mode_from_string(const std::string& name) {
  if (name == "gaussian") return HeadMode::Gaussian;
  if (name == "deterministic") return HeadMode::Deterministic;
  throw ModelError("unknown head mode '" + name + "' (expected gaussian|deterministic)");
}

std::string to_string(PredictMode mode) { return mode == PredictMode::Mean ? "mean" : "sample"; }

PredictMode predict_mode_from_string(const std::string& name) {
  if (name == "mean") return PredictMode::Mean;
  if (name == "sample") return PredictMode::Sample;
  throw ModelError("unknown predict mode '" + name + "' (expected mean|sample)");
}

CdtConfig CdtConfig::desk() { return CdtConfig{}; }

CdtConfig CdtConfig::paper() {
  CdtConfig c;
  c.n_layers = 3;
  c.n_heads = 8;
  c.embed_dim = 128;
  c.context_len = 10;
  c.dropout = 0.1;
  return c;
}

CdtConfig CdtConfig::preset(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw ModelError("unknown config preset '" + name + "' (expected desk|paper)");
}

void CdtConfig::validate() const {
  if (n_layers < 1) throw ModelError("n_layers must be >= 1");
  if (n_heads < 1 || embed_dim % n_heads != 0) {
    throw ModelError("embed_dim " + std::to_string(embed_dim) + " not divisible by n_heads " +
                     std::to_string(n_heads));
  }
  if (context_len < 1) throw ModelError("context_len must be >= 1");
  if (state_dim < 1 || action_dim < 1) throw ModelError("state/action dims must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ModelError("dropout must lie in [0, 1)");
  if (max_episode_len < 1) throw ModelError("max_episode_len must be >= 1");
  if (!(log_std_min < log_std_max)) throw ModelError("log_std bounds must satisfy min < max");
  if (!(action_bound > 0.0)) throw ModelError("action_bound must be positive");
  if (!(reward_scale > 0.0) || !(cost_scale > 0.0)) throw ModelError("RTG scales must be positive");
}

nlohmann::json CdtConfig::to_json() const {
  return {{"n_layers", n_layers},         {"n_heads", n_heads},
          {"embed_dim", embed_dim},       {"context_len", context_len},
          {"state_dim", state_dim},       {"action_dim", action_dim},
          {"dropout", dropout},           {"max_episode_len", max_episode_len},
          {"head_mode", cdt::to_string(head_mode)},
          {"log_std_bounds", {log_std_min, log_std_max}},
          {"action_bound", action_bound}, {"reward_scale", reward_scale},
          {"cost_scale", cost_scale}};
}

CdtConfig CdtConfig::from_json(const nlohmann::json& j) {
  CdtConfig c;
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.context_len = j.value("context_len", c.context_len);
  c.state_dim = j.value("state_dim", c.state_dim);
  c.action_dim = j.value("action_dim", c.action_dim);
  c.dropout = j.value("dropout", c.dropout);
  c.max_episode_len = j.value("max_episode_len", c.max_episode_len);
  if (j.contains("head_mode")) c.head_mode = head_mode_from_string(j["head_mode"].get<std::string>());
  if (j.contains("log_std_bounds")) {
    c.log_std_min = j["log_std_bounds"].at(0).get<double>();
    c.log_std_max = j["log_std_bounds"].at(1).get<double>();
  }
  c.action_bound = j.value("action_bound", c.action_bound);
  c.reward_scale = j.value("reward_scale", c.reward_scale);
  c.cost_scale = j.value("cost_scale", c.cost_scale);
  c.validate();
  return c;
}

std::size_t TokenWindow::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

void TokenWindow::validate(std::size_t state_dim, std::size_t action_dim) const {
  const std::size_t L = length();
  if (L == 0) throw ModelError("empty token window");
  if (rtg_cost.size() != L || states.size() != L || actions.size() != L || timesteps.size() != L ||
      valid.size() != L) {
    throw ModelError("token window channels have different lengths");
  }
  bool seen = false;
  std::size_t last = 0;
  for (std::size_t k = 0; k < L; ++k) {
    if (states[k].size() != state_dim || actions[k].size() != action_dim) {
      throw ModelError("token window position " + std::to_string(k) + " has wrong state/action size");
    }
    if (!valid[k]) {
      const bool zero = rtg_reward[k] == 0.0 && rtg_cost[k] == 0.0 && timesteps[k] == 0 &&
                        std::all_of(states[k].begin(), states[k].end(), [](double v) { return v == 0.0; }) &&
                        std::all_of(actions[k].begin(), actions[k].end(), [](double v) { return v == 0.0; });
      if (!zero) throw ModelError("padded position " + std::to_string(k) + " carries non-zero values");
      continue;
    }
    if (seen && timesteps[k] <= last) throw ModelError("timesteps must increase across valid positions");
    seen = true;
    last = timesteps[k];
  }
}

TokenWindow window_from_trajectory(const Trajectory& traj, std::size_t end, std::size_t K) {
  if (!traj.has_rtg()) throw ModelError("window_from_trajectory requires RTG channels");
  if (end < 1 || end > traj.length()) throw ModelError("window end out of range");
  if (K < 1) throw ModelError("context length must be >= 1");
  const std::size_t n = std::min(K, end);
  const std::size_t pad = K - n;
  const std::size_t ds = traj.state_dim();
  const std::size_t da = traj.action_dim();

  TokenWindow w;
  w.rtg_reward.assign(K, 0.0);
  w.rtg_cost.assign(K, 0.0);
  w.states.assign(K, Vector(ds, 0.0));
  w.actions.assign(K, Vector(da, 0.0));
  w.timesteps.assign(K, 0);
  w.valid.assign(K, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = end - n + i;
    const std::size_t k = pad + i;
    w.rtg_reward[k] = (*traj.rtg_reward)[src];
    w.rtg_cost[k] = (*traj.rtg_cost)[src];
    w.states[k] = traj.states[src];
    w.actions[k] = traj.actions[src];
    w.timesteps[k] = src;
    w.valid[k] = 1;
  }
  return w;
}

TokenWindow pad_left(const TokenWindow& w, std::size_t extra) {
  TokenWindow out;
  const std::size_t ds = w.states.empty() ? 0 : w.states.front().size();
  const std::size_t da = w.actions.empty() ? 0 : w.actions.front().size();
  out.rtg_reward.assign(extra, 0.0);
  out.rtg_cost.assign(extra, 0.0);
  out.states.assign(extra, Vector(ds, 0.0));
  out.actions.assign(extra, Vector(da, 0.0));
  out.timesteps.assign(extra, 0);
  out.valid.assign(extra, 0);
  out.rtg_reward.insert(out.rtg_reward.end(), w.rtg_reward.begin(), w.rtg_reward.end());
  out.rtg_cost.insert(out.rtg_cost.end(), w.rtg_cost.begin(), w.rtg_cost.end());
  out.states.insert(out.states.end(), w.states.begin(), w.states.end());
  out.actions.insert(out.actions.end(), w.actions.begin(), w.actions.end());
  out.timesteps.insert(out.timesteps.end(), w.timesteps.begin(), w.timesteps.end());
  out.valid.insert(out.valid.end(), w.valid.begin(), w.valid.end());
  return out;
}

CdtModel::CdtModel(const CdtConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const auto D = static_cast<Eigen::Index>(cfg_.embed_dim);
  const auto ds = static_cast<Eigen::Index>(cfg_.state_dim);
  const auto da = static_cast<Eigen::Index>(cfg_.action_dim);

  add_param("embed.timestep", normal_matrix(static_cast<Eigen::Index>(cfg_.max_episode_len), D, kInitStd, rng));
  add_param("embed.rtg_reward.w", normal_matrix(1, D, kInitStd, rng));
  add_param("embed.rtg_reward.b", zeros(1, D));
  add_param("embed.rtg_cost.w", normal_matrix(1, D, kInitStd, rng));
  add_param("embed.rtg_cost.b", zeros(1, D));
  add_param("embed.state.w", normal_matrix(ds, D, kInitStd, rng));
  add_param("embed.state.b", zeros(1, D));
  add_param("embed.action.w", normal_matrix(da, D, kInitStd, rng));
  add_param("embed.action.b", zeros(1, D));
  add_param("embed.ln.gamma", ones(1, D));
  add_param("embed.ln.beta", zeros(1, D));
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    add_param(p + "ln1.gamma", ones(1, D));
    add_param(p + "ln1.beta", zeros(1, D));
    add_param(p + "attn.qkv.w", normal_matrix(D, 3 * D, kInitStd, rng));
    add_param(p + "attn.qkv.b", zeros(1, 3 * D));
    add_param(p + "attn.proj.w", normal_matrix(D, D, kInitStd, rng));
    add_param(p + "attn.proj.b", zeros(1, D));
    add_param(p + "ln2.gamma", ones(1, D));
    add_param(p + "ln2.beta", zeros(1, D));
    add_param(p + "mlp.fc.w", normal_matrix(D, 4 * D, kInitStd, rng));
    add_param(p + "mlp.fc.b", zeros(1, 4 * D));
    add_param(p + "mlp.out.w", normal_matrix(4 * D, D, kInitStd, rng));
    add_param(p + "mlp.out.b", zeros(1, D));
  }
  add_param("final_ln.gamma", ones(1, D));
  add_param("final_ln.beta", zeros(1, D));
  add_param("head.mean.w", normal_matrix(D, da, kInitStd, rng));
  add_param("head.mean.b", zeros(1, da));
  if (cfg_.head_mode == HeadMode::Gaussian) {
    add_param("head.log_std.w", normal_matrix(D, da, kInitStd, rng));
    add_param("head.log_std.b", zeros(1, da));
  }
}

Var& CdtModel::add_param(const std::string& name, Matrix value) {
  names_.push_back(name);
  params_.push_back(nn::parameter(std::move(value)));
  return params_.back();
}

const Var& CdtModel::parameter(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return params_[i];
  }
  throw ModelError("no parameter named '" + name + "'");
}

std::size_t CdtModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->data.size());
  return n;
}

void CdtModel::check_windows(std::span<const TokenWindow> windows) const {
  if (windows.empty()) throw ModelError("empty batch of token windows");
  const std::size_t L = windows.front().length();
  for (const auto& w : windows) {
    if (w.length() != L) throw ModelError("token windows in a batch must share one length");
    w.validate(cfg_.state_dim, cfg_.action_dim);
    for (std::size_t k = 0; k < L; ++k) {
      if (w.timesteps[k] >= cfg_.max_episode_len) {
        throw ModelError("timestep " + std::to_string(w.timesteps[k]) + " >= max_episode_len " +
                         std::to_string(cfg_.max_episode_len));
      }
    }
  }
}

Var CdtModel::tokenize(Tape& t, std::span<const TokenWindow> windows) const {
  check_windows(windows);
  const std::size_t B = windows.size();
  const std::size_t L = windows.front().length();
  const std::size_t N = B * L;
  const auto n = static_cast<Eigen::Index>(N);

  Matrix r(n, 1), c(n, 1), s(n, static_cast<Eigen::Index>(cfg_.state_dim)),
      a(n, static_cast<Eigen::Index>(cfg_.action_dim));
  std::vector<std::size_t> ts(N);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& w = windows[b];
    for (std::size_t k = 0; k < L; ++k) {
      const auto row = static_cast<Eigen::Index>(b * L + k);
      r(row, 0) = w.rtg_reward[k] / cfg_.reward_scale;
      c(row, 0) = w.rtg_cost[k] / cfg_.cost_scale;
      for (std::size_t j = 0; j < cfg_.state_dim; ++j) s(row, static_cast<Eigen::Index>(j)) = w.states[k][j];
      for (std::size_t j = 0; j < cfg_.action_dim; ++j) a(row, static_cast<Eigen::Index>(j)) = w.actions[k][j];
      ts[b * L + k] = w.timesteps[k];
    }
  }

  const Var time = nn::embedding(t, parameter("embed.timestep"), ts);
  auto embed = [&](Matrix raw, const std::string& name) {
    Var e = nn::linear(t, nn::constant(std::move(raw)), parameter(name + ".w"), parameter(name + ".b"));
    return nn::add(t, e, time);
  };
  std::vector<Var> parts = {embed(std::move(r), "embed.rtg_reward"),
                            embed(std::move(c), "embed.rtg_cost"), embed(std::move(s), "embed.state"),
                            embed(std::move(a), "embed.action")};
  std::vector<std::vector<std::size_t>> positions(4, std::vector<std::size_t>(N));
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < L; ++k) {
      for (std::size_t j = 0; j < 4; ++j) positions[j][b * L + k] = b * 4 * L + 4 * k + j;
    }
  }
  return nn::assemble_rows(t, parts, positions, 4 * N);
}

ForwardOutput CdtModel::forward(Tape& t, std::span<const TokenWindow> windows, bool train,
                                Rng& rng) const {
  Var x = tokenize(t, windows);
  const std::size_t B = windows.size();
  const std::size_t L = windows.front().length();
  const std::size_t S = 4 * L;

  std::vector<std::uint8_t> key_valid(B * S);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < L; ++k) {
      for (std::size_t j = 0; j < 4; ++j) key_valid[b * S + 4 * k + j] = windows[b].valid[k];
    }
  }

  auto p = [&](const std::string& name) -> const Var& { return parameter(name); };
  auto linear = [&](const Var& in, const std::string& name) {
    return nn::linear(t, in, p(name + ".w"), p(name + ".b"));
  };

  x = nn::layer_norm(t, x, p("embed.ln.gamma"), p("embed.ln.beta"));
  x = nn::dropout(t, x, cfg_.dropout, train, rng);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string pre = "block" + std::to_string(l) + ".";
    Var h = nn::layer_norm(t, x, p(pre + "ln1.gamma"), p(pre + "ln1.beta"));
    Var att = nn::causal_attention(t, linear(h, pre + "attn.qkv"), B, S, cfg_.n_heads, key_valid);
    att = nn::dropout(t, linear(att, pre + "attn.proj"), cfg_.dropout, train, rng);
    x = nn::add(t, x, att);
    h = nn::layer_norm(t, x, p(pre + "ln2.gamma"), p(pre + "ln2.beta"));
    Var m = nn::gelu(t, linear(h, pre + "mlp.fc"));
    m = nn::dropout(t, linear(m, pre + "mlp.out"), cfg_.dropout, train, rng);
    x = nn::add(t, x, m);
  }
  x = nn::layer_norm(t, x, p("final_ln.gamma"), p("final_ln.beta"));

  std::vector<std::size_t> state_rows(B * L);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < L; ++k) state_rows[b * L + k] = b * S + 4 * k + 2;
  }
  const Var hs = nn::gather_rows(t, x, state_rows);

  ForwardOutput out;
  out.batch = B;
  out.length = L;
  out.mean = nn::scale(t, nn::tanh(t, linear(hs, "head.mean")), cfg_.action_bound);
  if (cfg_.head_mode == HeadMode::Gaussian) {
    // tanh maps the raw output smoothly onto [log_std_min, log_std_max].
    const double half = 0.5 * (cfg_.log_std_max - cfg_.log_std_min);
    out.log_std = nn::scale_shift(t, nn::tanh(t, linear(hs, "head.log_std")), half,
                                  cfg_.log_std_min + half);
  }
  return out;
}

std::vector<GaussianAction> CdtModel::distributions(const TokenWindow& window) const {
  Tape t(false);
  Rng unused(0);
  const auto out = forward(t, std::span<const TokenWindow>(&window, 1), false, unused);
  std::vector<GaussianAction> dists(window.length());
  for (std::size_t k = 0; k < window.length(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    dists[k].mean.assign(out.mean->data.row(row).begin(), out.mean->data.row(row).end());
    if (out.log_std) {
      dists[k].log_std.assign(out.log_std->data.row(row).begin(), out.log_std->data.row(row).end());
    }
  }
  return dists;
}

nn::Checkpoint CdtModel::to_checkpoint() const {
  nn::Checkpoint ckpt;
  ckpt.header = {{"kind", "cdt-model"}, {"config", cfg_.to_json()}};
  for (std::size_t i = 0; i < params_.size(); ++i) ckpt.arrays.push_back({names_[i], params_[i]->data});
  return ckpt;
}

CdtModel CdtModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.header.value("kind", "") != "cdt-model") throw ModelError("checkpoint is not a CDT model");
  CdtModel model(CdtConfig::from_json(ckpt.header.at("config")), 0);
  if (ckpt.arrays.size() != model.params_.size()) {
    throw ModelError("checkpoint holds " + std::to_string(ckpt.arrays.size()) + " arrays, model needs " +
                     std::to_string(model.params_.size()));
  }
  for (std::size_t i = 0; i < ckpt.arrays.size(); ++i) {
    const auto& a = ckpt.arrays[i];
    Var& p = model.params_[i];
    if (a.name != model.names_[i] || a.value.rows() != p->data.rows() || a.value.cols() != p->data.cols()) {
      throw ModelError("checkpoint array '" + a.name + "' does not match parameter '" + model.names_[i] + "'");
    }
    p->data = a.value;
  }
  return model;
}

void CdtModel::save(const std::filesystem::path& path) const { nn::save_checkpoint(to_checkpoint(), path); }

CdtModel CdtModel::load(const std::filesystem::path& path) {
  return from_checkpoint(nn::load_checkpoint(path));
}

Matrix targets_from_windows(std::span<const TokenWindow> windows, std::size_t action_dim) {
  if (windows.empty()) return Matrix(0, static_cast<Eigen::Index>(action_dim));
  const std::size_t L = windows.front().length();
  Matrix m(static_cast<Eigen::Index>(windows.size() * L), static_cast<Eigen::Index>(action_dim));
  for (std::size_t b = 0; b < windows.size(); ++b) {
    for (std::size_t k = 0; k < L; ++k) {
      for (std::size_t j = 0; j < action_dim; ++j) {
        m(static_cast<Eigen::Index>(b * L + k), static_cast<Eigen::Index>(j)) = windows[b].actions[k][j];
      }
    }
  }
  return m;
}

LossTerms compute_loss(Tape& t, const CdtModel& model, std::span<const TokenWindow> windows,
                       const Matrix& targets, double lambda_ent, bool train, Rng& rng) {
  if (windows.empty()) throw ModelError("loss over an empty batch");
  if (lambda_ent < 0.0) throw ModelError("entropy weight must be non-negative");
  const ForwardOutput out = model.forward(t, windows, train, rng);

  std::vector<double> weights;
  weights.reserve(windows.size() * out.length);
  for (const auto& w : windows) {
    for (auto v : w.valid) weights.push_back(v ? 1.0 : 0.0);
  }

  LossTerms terms;
  if (model.config().head_mode == HeadMode::Deterministic) {
    terms.total = nn::mse(t, out.mean, targets, weights);
    terms.nll = terms.total->data(0, 0);
    return terms;
  }
  const Var nll = nn::gaussian_nll(t, out.mean, out.log_std, targets, weights);
  const Var ent = nn::gaussian_entropy(t, out.log_std, weights);
  terms.nll = nll->data(0, 0);
  terms.entropy = ent->data(0, 0);
  terms.total = lambda_ent == 0.0 ? nll : nn::add(t, nll, nn::scale(t, ent, -lambda_ent));
  return terms;
}

Vector predict(const CdtModel& model, const TokenWindow& window, PredictMode mode, Rng& rng) {
  const auto dists = model.distributions(window);
  const GaussianAction& last = dists.back();
  Vector a = last.mean;
  if (mode == PredictMode::Sample && !last.log_std.empty()) {
    std::normal_distribution<double> n(0.0, 1.0);
    const double bound = model.config().action_bound;
    for (std::size_t j = 0; j < a.size(); ++j) {
      a[j] = std::clamp(a[j] + std::exp(last.log_std[j]) * n(rng), -bound, bound);
    }
  }
  return a;
}

}  // namespace cdt
