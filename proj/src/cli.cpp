#include "cdt/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "cdt/augmentation.hpp"
#include "cdt/collector.hpp"
#include "cdt/dataset.hpp"
#include "cdt/error.hpp"
#include "cdt/evaluation.hpp"
#include "cdt/frontier.hpp"
#include "cdt/model.hpp"
#include "cdt/training.hpp"

namespace cdt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raised for bad invocations that CLI11 cannot see (exit 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path default_output_dir() {
  if (const char* dir = std::getenv("CDT_OUTPUT_DIR"); dir && *dir) return dir;
  return ".";
}

fs::path resolve_output(const std::string& given, const std::string& fallback_name) {
  fs::path p = given.empty() ? default_output_dir() / fallback_name : fs::path(given);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

TrajectoryDataset open_dataset(const std::string& path) {
  if (path.empty() || !fs::exists(path)) throw UsageError("dataset not found: " + path);
  return load_dataset(path);
}

json file_entry(const fs::path& p) { return {{"path", p.string()}, {"sha256", file_sha256(p)}}; }

json option_value(const std::string& text) {
  try {
    json j = json::parse(text);
    if (j.is_number() || j.is_boolean()) return j;
  } catch (const json::exception&) {
  }
  return text;
}

// Every option of the subcommand with its effective value.
json resolved_config(const CLI::App& sub) {
  json cfg = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    if (opt->get_type_size() == 0) {
      cfg[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      cfg[name] = option_value(opt->results().back());
    } else {
      cfg[name] = option_value(opt->get_default_str());
    }
  }
  return cfg;
}

struct Manifest {
  std::string subcommand;
  json config;
  std::uint64_t seed = 0;
  json inputs = json::array();
  json outputs = json::array();
  json extra = json::object();
  std::string started;

  void write(const fs::path& path) const {
    json m = {{"subcommand", subcommand}, {"version", kVersion},        {"config", config},
              {"seed", seed},             {"inputs", inputs},           {"outputs", outputs},
              {"started_at", started},    {"finished_at", utc_now()}};
    for (const auto& [k, v] : extra.items()) m[k] = v;
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest: " + path.string());
    out << m.dump(2) << '\n';
  }
};

fs::path manifest_path(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json report_json(const FrontierReport& r, const TrajectoryDataset& ds) {
  FrontierIndex index(ds.return_points());
  json pareto = json::array();
  for (auto i : r.pareto_indices) pareto.push_back({ds.return_points()[i].reward, ds.return_points()[i].cost});
  return {{"kappa", r.kappa},
          {"pareto", pareto},
          {"pf", optional_json(r.pf)},
          {"ipf", optional_json(r.ipf)},
          {"rf", optional_json(r.rf)},
          {"epsilon", optional_json(r.epsilon)},
          {"normalized_epsilon", optional_json(r.normalized_epsilon)},
          {"pareto_indices", r.pareto_indices},
          {"n_trajectories", ds.size()},
          {"min_cost", index.min_cost()},
          {"max_cost", index.max_cost()},
          {"max_reward", index.max_reward()}};
}

json aggregate_json(const EvalAggregate& a) {
  return {{"norm_reward_mean", a.norm_reward_mean}, {"norm_reward_std", a.norm_reward_std},
          {"norm_cost_mean", a.norm_cost_mean},     {"norm_cost_std", a.norm_cost_std},
          {"reward_mean", a.reward_mean},           {"cost_mean", a.cost_mean},
          {"n", a.n},                               {"seed_norm_reward", a.seed_norm_reward},
          {"seed_norm_cost", a.seed_norm_cost}};
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (double v : parse_list(text)) {
    if (v < 0 || v != static_cast<double>(static_cast<std::uint64_t>(v))) {
      throw UsageError("seeds must be non-negative integers: " + text);
    }
    seeds.push_back(static_cast<std::uint64_t>(v));
  }
  if (seeds.empty()) throw UsageError("seed list is empty");
  return seeds;
}

// Reward bounds for normalization: from --dataset when given, else from the
// checkpoint's training metadata.
MetricConfig metric_for(const std::string& dataset, const nn::Checkpoint& ckpt) {
  if (!dataset.empty()) return MetricConfig::from_dataset(open_dataset(dataset));
  if (ckpt.header.contains("metric")) {
    MetricConfig m;
    m.r_min = ckpt.header["metric"].at("r_min").get<double>();
    m.r_max = ckpt.header["metric"].at("r_max").get<double>();
    return m;
  }
  throw UsageError("checkpoint carries no reward bounds; pass --dataset");
}

fs::path open_model_path(const std::string& path) {
  if (path.empty() || !fs::exists(path)) throw UsageError("model not found: " + path);
  return path;
}

TrajectoryDataset original_part(const TrajectoryDataset& ds) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!ds[i].is_augmented) idx.push_back(i);
  }
  return idx.empty() ? ds : ds.subset(idx);
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw UsageError("not a number: '" + item + "'");
    }
    if (item.find_first_not_of(" \t", used) != std::string::npos) throw UsageError("not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> config_to_args(const json& config) {
  if (!config.is_object()) throw UsageError("config file must hold a JSON object");
  std::vector<std::string> args;
  for (const auto& [key, value] : config.items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) {
        if (!joined.empty()) joined += ',';
        joined += v.is_string() ? v.get<std::string>() : v.dump();
      }
      args.push_back(flag);
      args.push_back(joined);
    } else if (value.is_string()) {
      args.push_back(flag);
      args.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      args.push_back(flag);
      args.push_back(value.dump());
    } else {
      throw UsageError("config key '" + key + "' has an unsupported value");
    }
  }
  return args;
}

int dispatch(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Constrained decision transformer pipeline", "cdt"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  const std::string config_help =
      "JSON object of option values; command-line flags take precedence over it, and it over built-in defaults";

  // collect
  std::string c_env = "point-circle", c_risks = "0,0.1,0.2,0.25,0.27,0.28,0.285,0.29,0.295,0.3,0.31,0.33,0.36,0.4,0.5,0.7,1";
  std::string c_out, c_budgets;
  std::size_t c_episodes = 20;
  std::uint64_t c_seed = 0;
  CollectOptions c_opts;
  auto* collect_cmd = app.add_subcommand("collect", "Roll out scripted policies over a risk grid into a dataset");
  collect_cmd->add_option("--config", config_help);
  collect_cmd->add_option("--env", c_env, "point-run | point-circle");
  collect_cmd->add_option("--risks", c_risks, "Comma-separated risk levels in [0, 1]");
  collect_cmd->add_option("--episodes", c_episodes, "Episodes per risk level")->check(CLI::PositiveNumber);
  collect_cmd->add_option("--seed", c_seed);
  collect_cmd->add_option("--noise", c_opts.noise_scale, "Gaussian action noise scale");
  collect_cmd->add_option("--margin", c_opts.margin, "How far high-risk policies push past the constraint");
  collect_cmd->add_option("--budgets", c_budgets,
                          "Comma-separated cost budgets; adds episodes that run at --budget-risk until the budget is spent, then at risk 0");
  collect_cmd->add_option("--budget-risk", c_opts.budget_risk, "Risk level of budgeted episodes before they retreat")
      ->check(CLI::Range(0.0, 1.0));
  collect_cmd->add_option("--output,-o", c_out, "Dataset path (.ndjson)");

  // filter
  std::string f_data, f_out, f_mode = "grid";
  GridSpec f_grid;
  std::size_t f_max = 3, f_min = 2;
  std::uint64_t f_seed = 0;
  auto* filter_cmd = app.add_subcommand("filter", "Thin or denoise a dataset on a (cost, reward) grid");
  filter_cmd->add_option("--config", config_help);
  filter_cmd->add_option("--dataset,-d", f_data)->required();
  filter_cmd->add_option("--mode", f_mode, "grid (cap per cell) | density (drop sparse cells)")
      ->check(CLI::IsMember({"grid", "density"}));
  filter_cmd->add_option("--cost-bin", f_grid.cost_bin_width)->check(CLI::PositiveNumber);
  filter_cmd->add_option("--reward-bin", f_grid.reward_bin_width)->check(CLI::PositiveNumber);
  filter_cmd->add_option("--origin-cost", f_grid.origin_cost);
  filter_cmd->add_option("--origin-reward", f_grid.origin_reward);
  filter_cmd->add_option("--max-per-cell", f_max);
  filter_cmd->add_option("--min-count", f_min);
  filter_cmd->add_option("--seed", f_seed);
  filter_cmd->add_option("--output,-o", f_out);

  // analyze
  std::string a_data, a_out, a_points;
  double a_kappa = 10.0, a_tol = kDefaultCostTolerance;
  auto* analyze_cmd = app.add_subcommand("analyze", "Print frontier statistics of a dataset as JSON");
  analyze_cmd->add_option("--config", config_help);
  analyze_cmd->add_option("--dataset,-d", a_data)->required();
  analyze_cmd->add_option("--kappa", a_kappa, "Cost threshold");
  analyze_cmd->add_option("--tol", a_tol, "Cost equality tolerance for rf");
  analyze_cmd->add_option("--output,-o", a_out, "Also write the report here");
  analyze_cmd->add_option("--points", a_points, "Write every trajectory's (cost, reward) to this CSV");

  // augment
  std::string g_data, g_out, g_mode = "argmax";
  AugmentConfig g_cfg;
  g_cfg.n_samples = 500;
  double g_rmax = std::numeric_limits<double>::quiet_NaN(), g_radius = std::numeric_limits<double>::quiet_NaN();
  auto* augment_cmd = app.add_subcommand("augment", "Append relabeled safe trajectories for infeasible targets");
  augment_cmd->add_option("--config", config_help);
  augment_cmd->add_option("--dataset,-d", g_data)->required();
  augment_cmd->add_option("--n", g_cfg.n_samples, "Number of target pairs to sample");
  augment_cmd->add_option("--mode", g_mode, "argmax | sampled")->check(CLI::IsMember({"argmax", "sampled"}));
  augment_cmd->add_option("--beta", g_cfg.beta, "Inverse-distance smoothing for sampled association");
  augment_cmd->add_option("--radius", g_radius, "Neighborhood radius (default: 5% of the return box diagonal)");
  augment_cmd->add_option("--r-max", g_rmax, "Upper reward bound for sampled targets");
  augment_cmd->add_option("--r-max-margin", g_cfg.r_max_margin);
  augment_cmd->add_option("--seed", g_cfg.seed);
  augment_cmd->add_option("--output,-o", g_out);

  // train
  std::string t_data, t_out, t_preset = "desk", t_head = "gaussian", t_trace, t_ckpt_dir;
  TrainConfig t_cfg;
  CdtConfig t_model = CdtConfig::desk();
  std::size_t t_augment = 0, t_log = 1000;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
  train_cmd->add_option("--config", config_help);
  train_cmd->add_option("--dataset,-d", t_data)->required();
  train_cmd->add_option("--preset", t_preset, "Architecture preset: desk | paper")->check(CLI::IsMember({"desk", "paper"}));
  train_cmd->add_option("--layers", t_model.n_layers);
  train_cmd->add_option("--heads", t_model.n_heads);
  train_cmd->add_option("--embed-dim", t_model.embed_dim);
  train_cmd->add_option("--dropout", t_model.dropout);
  train_cmd->add_option("--head", t_head, "gaussian | deterministic")->check(CLI::IsMember({"gaussian", "deterministic"}));
  train_cmd->add_option("--reward-scale", t_model.reward_scale, "Divisor applied to reward-to-go tokens (default: largest |reward return|)")
      ->default_str("auto");
  train_cmd->add_option("--cost-scale", t_model.cost_scale, "Divisor applied to cost-to-go tokens (default: largest cost return)")
      ->default_str("auto");
  train_cmd->add_option("--steps", t_cfg.grad_steps);
  train_cmd->add_option("--batch", t_cfg.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--context", t_cfg.context_len)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lambda-ent", t_cfg.lambda_ent);
  train_cmd->add_option("--lr", t_cfg.lr);
  train_cmd->add_option("--beta1", t_cfg.beta1);
  train_cmd->add_option("--beta2", t_cfg.beta2);
  train_cmd->add_option("--clip", t_cfg.clip_norm);
  train_cmd->add_option("--seed", t_cfg.seed);
  train_cmd->add_option("--augment", t_augment, "Augment with this many samples before training (0: off)");
  train_cmd->add_option("--checkpoint-dir", t_ckpt_dir);
  train_cmd->add_option("--checkpoint-every", t_cfg.checkpoint_every);
  train_cmd->add_option("--loss-trace", t_trace, "Loss CSV (default: <output>.loss.csv)");
  train_cmd->add_option("--log-every", t_log, "Progress line period on stderr (0: silent)");
  train_cmd->add_option("--output,-o", t_out, "Checkpoint path");

  // eval and sweep share these
  std::string e_model, e_env = "point-circle", e_data, e_mode = "sample", e_seeds = "0,1,2", e_out;
  double e_R = std::numeric_limits<double>::quiet_NaN(), e_C = 10.0;
  std::size_t e_episodes = 20;
  bool e_no_floor = false;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model at one target pair");
  auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate a model over a grid of target costs or rewards");
  std::string s_axis = "cost", s_grid = "2.5,5,7.5,10,15,20";
  double s_fixed = std::numeric_limits<double>::quiet_NaN();
  bool s_with_mean = false;
  for (auto* cmd : {eval_cmd, sweep_cmd}) {
    cmd->add_option("--config", config_help);
    cmd->add_option("--model,-m", e_model)->required();
    cmd->add_option("--env", e_env, "point-run | point-circle");
    cmd->add_option("--dataset,-d", e_data, "Reward bounds for normalization (default: from the checkpoint)");
    cmd->add_option("--mode", e_mode, "sample | mean")->check(CLI::IsMember({"sample", "mean"}));
    cmd->add_option("--episodes", e_episodes)->check(CLI::PositiveNumber);
    cmd->add_option("--seeds", e_seeds, "Comma-separated evaluation seeds");
    cmd->add_flag("--no-floor", e_no_floor, "Let the cost-to-go target go negative");
    cmd->add_option("--output,-o", e_out);
  }
  eval_cmd->add_option("--target-reward", e_R, "Initial reward target (default: dataset max reward)");
  eval_cmd->add_option("--target-cost", e_C, "Initial cost target");
  sweep_cmd->add_option("--axis", s_axis, "cost | reward")->check(CLI::IsMember({"cost", "reward"}));
  sweep_cmd->add_option("--grid", s_grid, "Comma-separated axis values");
  sweep_cmd->add_option("--fixed", s_fixed,
                        "Target held fixed (cost axis: reward, default dataset max; reward axis: cost, default 10)");
  sweep_cmd->add_flag("--with-mean", s_with_mean, "Also sweep with mean actions into <output>.mean.csv");

  // Expand --config into flags placed ahead of the user's own flags.
  std::vector<std::string> args = raw_args;
  try {
    if (!args.empty()) {
      for (std::size_t i = 1; i < args.size(); ++i) {
        std::string path;
        std::size_t span = 0;
        if (args[i] == "--config" && i + 1 < args.size()) {
          path = args[i + 1];
          span = 2;
        } else if (args[i].rfind("--config=", 0) == 0) {
          path = args[i].substr(9);
          span = 1;
        }
        if (span == 0) continue;
        std::ifstream in(path);
        if (!in) throw UsageError("config not found: " + path);
        json cfg;
        try {
          cfg = json::parse(in);
        } catch (const json::exception& e) {
          throw UsageError("config " + path + " is not valid JSON: " + e.what());
        }
        auto extra = config_to_args(cfg);
        args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i + span));
        args.insert(args.begin() + 1, extra.begin(), extra.end());
        break;
      }
    }
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error [" << e.category() << "]: " << e.what() << '\n';
    return 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  Manifest manifest;
  manifest.subcommand = sub->get_name();
  manifest.config = resolved_config(*sub);
  manifest.started = utc_now();

  try {
    if (sub == collect_cmd) {
      const EnvSpec env = make_env(c_env);
      const auto risks = parse_list(c_risks);
      if (!c_budgets.empty()) c_opts.cost_budgets = parse_list(c_budgets);
      if (risks.empty()) throw UsageError("risk grid is empty");
      const TrajectoryDataset ds = collect(env, risks, c_episodes, c_seed, c_opts);
      const fs::path path = resolve_output(c_out, "dataset.ndjson");
      save_dataset(ds, path);
      manifest.seed = c_seed;
      manifest.outputs.push_back(file_entry(path));
      manifest.extra["env"] = env_to_json(env);
      manifest.write(manifest_path(path));
      out << "wrote " << ds.size() << " trajectories to " << path.string() << '\n';
    } else if (sub == filter_cmd) {
      const TrajectoryDataset ds = open_dataset(f_data);
      Rng rng(f_seed);
      const TrajectoryDataset kept =
          f_mode == "grid" ? grid_filter(ds, f_grid, f_max, rng) : density_filter(ds, f_grid, f_min);
      const fs::path path = resolve_output(f_out, "filtered.ndjson");
      save_dataset(kept, path);
      manifest.seed = f_seed;
      manifest.inputs.push_back(file_entry(f_data));
      manifest.outputs.push_back(file_entry(path));
      manifest.write(manifest_path(path));
      out << "kept " << kept.size() << " of " << ds.size() << " trajectories in " << path.string() << '\n';
    } else if (sub == analyze_cmd) {
      const TrajectoryDataset ds = open_dataset(a_data);
      if (ds.empty()) throw DatasetError("dataset is empty");
      const json report = report_json(analyze(ds, a_kappa, a_tol), ds);
      out << report.dump(2) << '\n';
      manifest.inputs.push_back(file_entry(a_data));
      if (!a_points.empty()) {
        const fs::path path = resolve_output(a_points, "");
        std::ofstream csv(path);
        csv.precision(17);
        csv << "index,cost,reward\n";
        for (std::size_t i = 0; i < ds.size(); ++i) {
          csv << i << ',' << ds.return_points()[i].cost << ',' << ds.return_points()[i].reward << '\n';
        }
        csv.close();
        manifest.outputs.push_back(file_entry(path));
      }
      fs::path mpath;
      if (!a_out.empty()) {
        const fs::path path = resolve_output(a_out, "");
        std::ofstream(path) << report.dump(2) << '\n';
        manifest.outputs.push_back(file_entry(path));
        mpath = manifest_path(path);
      } else {
        fs::create_directories(default_output_dir());
        mpath = default_output_dir() / "analyze.manifest.json";
      }
      manifest.write(mpath);
    } else if (sub == augment_cmd) {
      const TrajectoryDataset ds = open_dataset(g_data);
      g_cfg.mode = association_mode_from_string(g_mode);
      if (!std::isnan(g_rmax)) g_cfg.r_max_sample = g_rmax;
      if (!std::isnan(g_radius)) g_cfg.neighborhood_radius = g_radius;
      const AugmentResult res = augment(ds, g_cfg);
      const fs::path path = resolve_output(g_out, "augmented.ndjson");
      save_dataset(res.dataset, path);
      const json summary = {{"requested", res.requested},
                            {"produced", res.produced},
                            {"skipped", res.skipped},
                            {"skip_reasons", res.skip_reasons}};
      const fs::path summary_path = fs::path(path.string() + ".summary.json");
      std::ofstream(summary_path) << summary.dump(2) << '\n';
      manifest.seed = g_cfg.seed;
      manifest.inputs.push_back(file_entry(g_data));
      manifest.outputs.push_back(file_entry(path));
      manifest.outputs.push_back(file_entry(summary_path));
      manifest.extra["augmentation"] = summary;
      manifest.write(manifest_path(path));
      for (const auto& why : res.skip_reasons) err << "skipped " << why << '\n';
      out << "appended " << res.produced << " relabeled trajectories (" << res.skipped << " skipped) to "
          << path.string() << '\n';
    } else if (sub == train_cmd) {
      TrajectoryDataset ds = open_dataset(t_data).with_returns_to_go();
      if (ds.empty()) throw DatasetError("dataset is empty");
      // Preset first, then explicit architecture flags on top.
      CdtConfig model_cfg = CdtConfig::preset(t_preset);
      for (const char* name : {"layers", "heads", "embed-dim", "dropout", "reward-scale", "cost-scale"}) {
        if (sub->get_option(std::string("--") + name)->count() == 0) continue;
        const std::string n = name;
        if (n == "layers") model_cfg.n_layers = t_model.n_layers;
        if (n == "heads") model_cfg.n_heads = t_model.n_heads;
        if (n == "embed-dim") model_cfg.embed_dim = t_model.embed_dim;
        if (n == "dropout") model_cfg.dropout = t_model.dropout;
        if (n == "reward-scale") model_cfg.reward_scale = t_model.reward_scale;
        if (n == "cost-scale") model_cfg.cost_scale = t_model.cost_scale;
      }
      const TrajectoryDataset originals = original_part(ds);
      const CdtConfig fitted = fit_return_scales(model_cfg, originals);
      if (sub->get_option("--reward-scale")->count() == 0) model_cfg.reward_scale = fitted.reward_scale;
      if (sub->get_option("--cost-scale")->count() == 0) model_cfg.cost_scale = fitted.cost_scale;
      model_cfg.head_mode = head_mode_from_string(t_head);
      model_cfg.context_len = t_cfg.context_len;
      model_cfg.state_dim = ds.state_dim();
      model_cfg.action_dim = ds.action_dim();
      model_cfg.validate();
      manifest.config["model"] = model_cfg.to_json();

      if (t_augment > 0) {
        AugmentConfig acfg;
        acfg.n_samples = t_augment;
        acfg.seed = t_cfg.seed;
        ds = augment(ds, acfg).dataset;
      }
      CdtModel model(model_cfg, derive_seed({t_cfg.seed, 0x30de1ULL}));
      const fs::path path = resolve_output(t_out, "model.ckpt");
      TrainHooks hooks;
      if (!t_ckpt_dir.empty()) hooks.checkpoint_dir = t_ckpt_dir;
      if (t_log > 0) {
        hooks.on_step = [&](const LossRecord& r) {
          if (r.step % t_log == 0) err << "step " << r.step << " nll " << r.nll << " entropy " << r.entropy << '\n';
        };
      }
      const TrainResult res = train(ds, model, t_cfg, hooks);

      nn::Checkpoint ckpt = model.to_checkpoint();
      const MetricConfig metric = MetricConfig::from_dataset(originals);
      const FrontierIndex index(originals.return_points());
      ckpt.header["metric"] = {{"r_min", metric.r_min}, {"r_max", metric.r_max}, {"max_cost", index.max_cost()}};
      ckpt.header["train"] = t_cfg.to_json();
      nn::save_checkpoint(ckpt, path);
      const fs::path trace = t_trace.empty() ? fs::path(path.string() + ".loss.csv") : fs::path(t_trace);
      write_loss_trace(res.trace, trace);

      manifest.seed = t_cfg.seed;
      manifest.inputs.push_back(file_entry(t_data));
      manifest.outputs.push_back(file_entry(path));
      manifest.outputs.push_back(file_entry(trace));
      for (const auto& p : res.checkpoints) manifest.outputs.push_back(file_entry(p));
      manifest.write(manifest_path(path));
      out << "trained " << t_cfg.grad_steps << " steps on " << ds.size() << " trajectories; checkpoint "
          << path.string() << '\n';
    } else {
      const fs::path model_path = open_model_path(e_model);
      const nn::Checkpoint ckpt = nn::load_checkpoint(model_path);
      const CdtModel model = CdtModel::from_checkpoint(ckpt);
      const EnvSpec env = make_env(e_env);
      EvalParams params;
      params.episodes = e_episodes;
      params.seeds = parse_seeds(e_seeds);
      params.rollout.mode = predict_mode_from_string(e_mode);
      params.rollout.floor_cost = !e_no_floor;
      params.metric = metric_for(e_data, ckpt);
      manifest.inputs.push_back(file_entry(model_path));
      if (!e_data.empty()) manifest.inputs.push_back(file_entry(e_data));
      const std::string model_hash = manifest.inputs[0]["sha256"];

      if (sub == eval_cmd) {
        const double R = std::isnan(e_R) ? params.metric.r_max : e_R;
        const EvalAggregate agg = evaluate(model, env, R, e_C, params);
        json report = {{"target_reward", R},
                       {"target_cost", e_C},
                       {"aggregate", aggregate_json(agg)},
                       {"model_sha256", model_hash},
                       {"env", env_to_json(env)},
                       {"mode", e_mode},
                       {"floor_cost", params.rollout.floor_cost},
                       {"seeds", params.seeds}};
        out << report.dump(2) << '\n';
        const fs::path path = resolve_output(e_out, "eval.json");
        std::ofstream(path) << report.dump(2) << '\n';
        manifest.outputs.push_back(file_entry(path));
        manifest.write(manifest_path(path));
      } else {
        const auto grid = parse_list(s_grid);
        if (grid.empty()) throw UsageError("sweep grid is empty");
        const bool cost_axis = s_axis == "cost";
        const double fixed = !std::isnan(s_fixed) ? s_fixed : (cost_axis ? params.metric.r_max : 10.0);
        auto run = [&](const EvalParams& p) {
          return cost_axis ? sweep_target_cost(model, env, grid, fixed, p)
                           : sweep_target_reward(model, env, grid, fixed, p);
        };
        const fs::path path = resolve_output(e_out, "sweep.csv");
        const SweepResult res = run(params);
        write_sweep_csv(res, path);
        json meta = sweep_metadata(res, env, params);
        meta["model_sha256"] = model_hash;
        const fs::path meta_path = fs::path(path.string() + ".meta.json");
        std::ofstream(meta_path) << meta.dump(2) << '\n';
        manifest.outputs.push_back(file_entry(path));
        manifest.outputs.push_back(file_entry(meta_path));
        if (s_with_mean) {
          EvalParams mean_params = params;
          mean_params.rollout.mode = PredictMode::Mean;
          const fs::path mean_path = fs::path(path.string() + ".mean.csv");
          write_sweep_csv(run(mean_params), mean_path);
          manifest.outputs.push_back(file_entry(mean_path));
        }
        manifest.write(manifest_path(path));
        out << sweep_csv(res);
      }
    }
  } catch (const UsageError& e) {
    err << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error [" << e.category() << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace cdt::cli
