// rpolab: train PPO / RPO agents, run ablation sweeps, aggregate and plot.
//
// Option precedence: --config file < RPOLAB_* environment variables <
// command-line flags.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "rpolab/experiment.hpp"

namespace {

using rpolab::RunSpec;

struct CliArgs {
  std::string env = "pendulum";
  std::string algo = "rpo";
  std::string dist = "gaussian";
  double alpha = 0.5;
  double ent_coef = 0.0;
  std::string aug = "none";
  std::string seeds = "1";
  long total_timesteps = 0;  // 0: per-environment default
  std::string out = "runs";
  int workers = 1;
  int num_steps = 2048;
  int num_envs = 1;
  int num_minibatches = 32;
  int update_epochs = 10;
  double learning_rate = 3e-4;
  bool anneal_lr = false;
  bool cache_perturbation = false;
  double drac_coef = 0.1;
  double window = 0.1;
  bool wall_clock = false;
  std::string alphas = "0.001,0.5,1000";
  std::string ent_coefs = "0,0.01,0.05,0.5,1,10";
  std::string dir;
  std::string config;
};

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v;
    if (!(is >> v) || !(is >> std::ws).eof())
      throw CLI::ValidationError(what, "cannot parse '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError(what, "list is empty");
  return out;
}

/// Flat `key=value` lines; '#' starts a comment.
std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CLI::ConversionError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    kv[key] = value;
  }
  return kv;
}

std::string env_var_name(const std::string& flag) {
  std::string name = "RPOLAB_";
  for (char c : flag) name += c == '-' ? '_' : static_cast<char>(std::toupper(c));
  return name;
}

class Cli {
 public:
  Cli() : app_("Robust policy optimization experiments") {
    app_.require_subcommand(1);
    app_.fallthrough();  // --config may follow the subcommand name
    app_.add_option("--config", args_.config, "key=value file with defaults for any flag")
        ->envname("RPOLAB_CONFIG");

    train_ = app_.add_subcommand("train", "train one variant over a list of seeds");
    sweep_alpha_ = app_.add_subcommand("sweep-alpha", "RPO alpha ablation grid");
    sweep_ent_ = app_.add_subcommand("sweep-ent", "entropy-coefficient grid");
    aggregate_ = app_.add_subcommand("aggregate", "recompute summaries under an output dir");
    plot_ = app_.add_subcommand("plot", "write return/entropy SVG charts for a run dir");

    for (CLI::App* sub : {train_, sweep_alpha_, sweep_ent_}) add_run_options(sub);
    add(sweep_alpha_, "alphas", args_.alphas, "comma-separated alpha values");
    add(sweep_ent_, "ent-coefs", args_.ent_coefs, "comma-separated entropy coefficients");
    add(aggregate_, "out", args_.out, "output directory to scan");
    add(aggregate_, "window", args_.window, "final-window fraction of iterations");
    add(plot_, "dir", args_.dir, "variant or environment directory")->required();
  }

  int main(int argc, char** argv) {
    try {
      apply_config_file(argc, argv);
      app_.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app_.exit(e);
      return code == 0 ? 0 : 2;
    }
    try {
      return dispatch();
    } catch (const std::invalid_argument& e) {
      std::cerr << "usage error: " << e.what() << '\n';
      return 2;
    } catch (const rpolab::ConfigError& e) {
      std::cerr << "configuration error: " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }

 private:
  template <class T>
  CLI::Option* add(CLI::App* sub, const std::string& flag, T& target, const std::string& help) {
    CLI::Option* opt = sub->add_option("--" + flag, target, help)->envname(env_var_name(flag));
    options_[flag].push_back(opt);
    return opt;
  }

  CLI::Option* add_flag(CLI::App* sub, const std::string& flag, bool& target,
                        const std::string& help) {
    CLI::Option* opt = sub->add_flag("--" + flag, target, help)->envname(env_var_name(flag));
    options_[flag].push_back(opt);
    return opt;
  }

  // Choice-valued options are validated by the rpolab parsers after
  // parsing: CLI11 drops environment values that fail a validator instead of
  // reporting them, which would silently fall back to the default.
  void add_run_options(CLI::App* sub) {
    add(sub, "env", args_.env, "pendulum | cartpole | pointmass");
    add(sub, "algo", args_.algo, "ppo | rpo");
    add(sub, "dist", args_.dist, "gaussian | laplace | gumbel");
    add(sub, "alpha", args_.alpha, "RPO perturbation half-width");
    add(sub, "ent-coef", args_.ent_coef, "entropy bonus coefficient");
    add(sub, "aug", args_.aug, "none | rad | drac");
    add(sub, "seeds", args_.seeds, "comma-separated seeds");
    add(sub, "total-timesteps", args_.total_timesteps,
        "environment steps per seed (0: 1M pendulum, 500k cartpole, 200k pointmass)");
    add(sub, "out", args_.out, "output directory");
    add(sub, "workers", args_.workers, "parallel seed workers (0 = hardware threads)");
    add(sub, "num-steps", args_.num_steps, "rollout length per environment slot");
    add(sub, "num-envs", args_.num_envs, "environment slots");
    add(sub, "num-minibatches", args_.num_minibatches, "minibatches per epoch");
    add(sub, "update-epochs", args_.update_epochs, "epochs per update");
    add(sub, "learning-rate", args_.learning_rate, "Adam learning rate");
    add_flag(sub, "anneal-lr", args_.anneal_lr, "linearly anneal the learning rate to 0");
    add_flag(sub, "cache-perturbation", args_.cache_perturbation,
             "draw one location shift per transition per update");
    add(sub, "drac-coef", args_.drac_coef, "DRAC regularizer weight");
    add(sub, "window", args_.window, "final-window fraction of iterations");
    add_flag(sub, "wall-clock", args_.wall_clock,
             "record wall time in the CSV (breaks byte-reproducibility)");
  }

  void apply_config_file(int argc, char** argv) {
    std::string path;
    for (int i = 1; i < argc; ++i) {
      const std::string a = argv[i];
      if (a == "--config" && i + 1 < argc) path = argv[i + 1];
      else if (a.rfind("--config=", 0) == 0) path = a.substr(9);
    }
    if (path.empty())
      if (const char* e = std::getenv("RPOLAB_CONFIG")) path = e;
    if (path.empty()) return;
    for (const auto& [key, value] : read_config(path)) {
      auto it = options_.find(key);
      if (it == options_.end()) throw CLI::ConversionError("unknown config key '" + key + "'");
      for (CLI::Option* opt : it->second) opt->default_val(value);
    }
  }

  RunSpec run_spec() const {
    RunSpec s;
    s.env = args_.env;
    s.algo = rpolab::parse_algo(args_.algo);
    s.family = rpolab::parse_family(args_.dist);
    s.rpo_alpha = args_.alpha;
    s.ent_coef = args_.ent_coef;
    s.aug = rpolab::parse_aug_mode(args_.aug);
    s.seeds = parse_list<std::uint64_t>(args_.seeds, "--seeds");
    s.total_timesteps = args_.total_timesteps > 0 ? args_.total_timesteps
                                                  : rpolab::default_total_timesteps(s.env);
    s.out_dir = args_.out;
    s.workers = args_.workers > 0 ? args_.workers
                                  : std::max(1u, std::thread::hardware_concurrency());
    s.base.num_steps = args_.num_steps;
    s.base.num_envs = args_.num_envs;
    s.base.num_minibatches = args_.num_minibatches;
    s.base.update_epochs = args_.update_epochs;
    s.base.learning_rate = args_.learning_rate;
    s.base.anneal_lr = args_.anneal_lr;
    s.base.cache_perturbation = args_.cache_perturbation;
    s.base.aug.drac_coef = args_.drac_coef;
    s.record_wall_time = args_.wall_clock;
    s.final_window = args_.window;
    s.validate();
    return s;
  }

  static void print_summary(const rpolab::AggregateSummary& s) {
    std::printf("%-10s %-24s seeds=%zu final_return=%.2f +- %.2f final_entropy=%.4f\n",
                s.env.c_str(), s.variant.c_str(), s.seeds.size(), s.mean, s.std, s.entropy_mean);
  }

  static int report_failures(const rpolab::RunOutcome& o) {
    for (const auto& [seed, msg] : o.failures)
      std::fprintf(stderr, "seed %llu aborted: %s\n", static_cast<unsigned long long>(seed),
                   msg.c_str());
    return o.ok() ? 0 : 1;
  }

  int dispatch() {
    if (train_->parsed()) {
      const RunSpec spec = run_spec();
      const auto outcome = rpolab::run(spec);
      print_summary(outcome.summary);
      std::printf("wrote %s\n", rpolab::variant_dir(spec).string().c_str());
      return report_failures(outcome);
    }
    if (sweep_alpha_->parsed() || sweep_ent_->parsed()) {
      const RunSpec spec = run_spec();
      const bool alpha = sweep_alpha_->parsed();
      const auto values = parse_list<double>(alpha ? args_.alphas : args_.ent_coefs,
                                             alpha ? "--alphas" : "--ent-coefs");
      const auto res = alpha ? rpolab::sweep_alpha(spec, values) : rpolab::sweep_ent(spec, values);
      std::printf("%-10s %-24s %14s %12s %12s\n", "value", "variant", "final_return", "std",
                  "entropy");
      for (const auto& r : res.rows)
        std::printf("%-10g %-24s %14.2f %12.2f %12.4f\n", r.value, r.variant.c_str(), r.mean,
                    r.std, r.entropy_mean);
      int code = 0;
      for (const auto& o : res.outcomes) code |= report_failures(o);
      return code;
    }
    if (aggregate_->parsed()) {
      auto all = rpolab::aggregate(args_.out, args_.window);
      for (const auto& s : all) {
        print_summary(s);
        std::printf("%-10s %-24s normalized_return=%.4f\n", "", "", s.normalized_return);
      }
      std::printf("wrote %s\n", (std::filesystem::path(args_.out) / "aggregate.json").c_str());
      return 0;
    }
    if (plot_->parsed()) {
      for (const auto& p : rpolab::emit_charts(args_.dir)) std::printf("wrote %s\n", p.c_str());
      return 0;
    }
    return 2;
  }

  CLI::App app_;
  CliArgs args_;
  CLI::App* train_ = nullptr;
  CLI::App* sweep_alpha_ = nullptr;
  CLI::App* sweep_ent_ = nullptr;
  CLI::App* aggregate_ = nullptr;
  CLI::App* plot_ = nullptr;
  std::map<std::string, std::vector<CLI::Option*>> options_;
};

}  // namespace

int main(int argc, char** argv) {
  Cli cli;
  return cli.main(argc, argv);
}
