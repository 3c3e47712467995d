// Experiment orchestration: per-seed runs, CSV metric files, cross-seed
// aggregation, normalized-return scores, ablation sweeps and charts.
#pragma once

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include "rpolab/chart.hpp"
#include "rpolab/trainer.hpp"

namespace rpolab {

namespace fs = std::filesystem;

/// Malformed or missing metric file.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        file_(file),
        line_(line) {}
  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

enum class Algo { Ppo, Rpo };

inline Algo parse_algo(std::string_view s) {
  if (s == "ppo") return Algo::Ppo;
  if (s == "rpo") return Algo::Rpo;
  throw std::invalid_argument("unknown algorithm '" + std::string(s) + "'");
}

/// Desk-scale training budget per environment (single CPU core, minutes per
/// seed). These are local choices, not benchmark protocol values.
inline long default_total_timesteps(std::string_view env) {
  if (env == "cartpole") return 500'000;
  if (env == "pointmass") return 200'000;
  return 1'000'000;
}

struct RunSpec {
  std::string env = "pendulum";
  Algo algo = Algo::Rpo;
  Family family = Family::Gaussian;
  double rpo_alpha = 0.5;
  double ent_coef = 0.0;
  AugMode aug = AugMode::None;
  std::vector<std::uint64_t> seeds{1};
  long total_timesteps = 1'000'000;
  std::string out_dir = "runs";
  /// Remaining hyperparameters; the fields above override their counterparts.
  TrainConfig base;
  int workers = 1;
  bool record_wall_time = false;
  double final_window = 0.1;

  double effective_alpha() const { return algo == Algo::Ppo ? 0.0 : rpo_alpha; }

  void validate() const {
    const auto& envs = registered_envs();
    if (std::find(envs.begin(), envs.end(), env) == envs.end())
      throw std::invalid_argument("unknown environment '" + env + "'");
    if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
    if (!(rpo_alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
      throw std::invalid_argument("seeds must be distinct");
    if (!(final_window > 0.0 && final_window <= 1.0))
      throw std::invalid_argument("final window must be in (0, 1]");
    config_for(seeds.front()).validate();
  }

  TrainConfig config_for(std::uint64_t seed) const {
    TrainConfig c = base;
    c.total_timesteps = total_timesteps;
    c.rpo_alpha = effective_alpha();
    c.ent_coef = ent_coef;
    c.dist_family = family;
    c.aug.mode = aug;
    c.seed = seed;
    return c;
  }
};

/// Shortest round-trippable-looking decimal for directory names.
inline std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

/// e.g. "ppo", "rpo-a0.5", "ppo-laplace", "ppo-ent0.01", "ppo-rad".
inline std::string variant_name(const RunSpec& s) {
  std::string v = s.algo == Algo::Ppo ? "ppo" : "rpo-a" + short_number(s.rpo_alpha);
  if (s.family != Family::Gaussian) v += "-" + std::string(to_string(s.family));
  if (s.ent_coef != 0.0) v += "-ent" + short_number(s.ent_coef);
  if (s.aug != AugMode::None) v += "-" + std::string(to_string(s.aug));
  return v;
}

inline fs::path variant_dir(const RunSpec& s) {
  return fs::path(s.out_dir) / s.env / variant_name(s);
}

inline fs::path seed_csv_path(const RunSpec& s, std::uint64_t seed) {
  return variant_dir(s) / ("seed" + std::to_string(seed) + ".csv");
}

// ---------------------------------------------------------------- CSV

inline constexpr const char* kCsvHeader =
    "step,return_mean,entropy,policy_loss,value_loss,approx_kl,clip_frac,wall_s";

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_csv_line(const MetricRow& r) {
  std::string s = std::to_string(r.global_step);
  for (double v : {r.episodic_return_mean, r.policy_entropy, r.policy_loss, r.value_loss,
                   r.approx_kl, r.clip_fraction, r.wall_time_s})
    s += "," + format_double(v);
  return s;
}

inline void write_metrics_csv(const fs::path& path, const std::vector<MetricRow>& rows) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kCsvHeader << '\n';
  for (const auto& r : rows) out << to_csv_line(r) << '\n';
}

inline std::vector<MetricRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError(path.string(), 1, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw ParseError(path.string(), 1, "unexpected header '" + line + "'");
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8)
      throw ParseError(path.string(), lineno,
                       "expected 8 fields, found " + std::to_string(cells.size()));
    double vals[8];
    for (int k = 0; k < 8; ++k) {
      const char* begin = cells[k].c_str();
      char* end = nullptr;
      errno = 0;
      vals[k] = std::strtod(begin, &end);
      if (end == begin || *end != '\0')
        throw ParseError(path.string(), lineno, "field " + std::to_string(k + 1) +
                                                    " is not a number: '" + cells[k] + "'");
    }
    MetricRow r;
    r.global_step = static_cast<long>(vals[0]);
    if (static_cast<double>(r.global_step) != vals[0] || vals[0] < 0)
      throw ParseError(path.string(), lineno, "step is not a non-negative integer");
    if (!rows.empty() && r.global_step <= rows.back().global_step)
      throw ParseError(path.string(), lineno, "steps must be strictly increasing");
    r.episodic_return_mean = vals[1];
    r.policy_entropy = vals[2];
    r.policy_loss = vals[3];
    r.value_loss = vals[4];
    r.approx_kl = vals[5];
    r.clip_fraction = vals[6];
    r.wall_time_s = vals[7];
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------- aggregation

/// Mean of `field` over the last `fraction` of rows (at least one row),
/// skipping NaN entries. NaN if nothing finite remains.
template <class Field>
double final_window_mean(const std::vector<MetricRow>& rows, double fraction, Field field) {
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto n = rows.size();
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
  double s = 0.0;
  std::size_t c = 0;
  for (std::size_t i = n - std::min(k, n); i < n; ++i) {
    const double v = field(rows[i]);
    if (std::isnan(v)) continue;
    s += v;
    ++c;
  }
  return c ? s / static_cast<double>(c) : std::numeric_limits<double>::quiet_NaN();
}

inline double final_return(const std::vector<MetricRow>& rows, double fraction = 0.1) {
  return final_window_mean(rows, fraction,
                           [](const MetricRow& r) { return r.episodic_return_mean; });
}

inline double final_entropy(const std::vector<MetricRow>& rows, double fraction = 0.1) {
  return final_window_mean(rows, fraction, [](const MetricRow& r) { return r.policy_entropy; });
}

/// Population mean and standard deviation.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

struct AggregateSummary {
  std::string env;
  std::string variant;
  std::vector<std::uint64_t> seeds;
  std::vector<double> final_returns;
  std::vector<double> final_entropies;
  double mean = 0.0;
  double std = 0.0;
  double entropy_mean = 0.0;
  double normalized_return = std::numeric_limits<double>::quiet_NaN();
};

inline AggregateSummary summarize(const std::string& env, const std::string& variant,
                                  const std::vector<std::uint64_t>& seeds,
                                  const std::vector<std::vector<MetricRow>>& runs,
                                  double fraction = 0.1) {
  AggregateSummary s{env, variant, seeds, {}, {}, 0.0, 0.0, 0.0,
                     std::numeric_limits<double>::quiet_NaN()};
  for (const auto& rows : runs) {
    s.final_returns.push_back(final_return(rows, fraction));
    s.final_entropies.push_back(final_entropy(rows, fraction));
  }
  std::tie(s.mean, s.std) = mean_std(s.final_returns);
  s.entropy_mean = mean_std(s.final_entropies).first;
  return s;
}

inline nlohmann::json to_json(const AggregateSummary& s) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  nlohmann::json j;
  j["env"] = s.env;
  j["variant"] = s.variant;
  j["seeds"] = s.seeds;
  j["final_returns"] = nlohmann::json::array();
  for (double v : s.final_returns) j["final_returns"].push_back(num(v));
  j["final_entropies"] = nlohmann::json::array();
  for (double v : s.final_entropies) j["final_entropies"].push_back(num(v));
  j["mean"] = num(s.mean);
  j["std"] = num(s.std);
  j["entropy_mean"] = num(s.entropy_mean);
  if (std::isfinite(s.normalized_return)) j["normalized_return"] = s.normalized_return;
  return j;
}

/// Per env, min-max scales each variant's mean over the compared variants
/// (an env where all means coincide contributes 0.5), then averages each
/// variant's score over the envs it appears in. Writes the score into each
/// summary and returns variant -> score.
inline std::map<std::string, double> normalized_return(std::vector<AggregateSummary>& summaries) {
  std::map<std::string, std::pair<double, double>> range;  // env -> (min, max)
  for (const auto& s : summaries) {
    auto [it, fresh] = range.try_emplace(s.env, s.mean, s.mean);
    if (!fresh) {
      it->second.first = std::min(it->second.first, s.mean);
      it->second.second = std::max(it->second.second, s.mean);
    }
  }
  std::map<std::string, std::pair<double, int>> acc;
  for (auto& s : summaries) {
    const auto [lo, hi] = range.at(s.env);
    s.normalized_return = hi > lo ? (s.mean - lo) / (hi - lo) : 0.5;
    auto& a = acc[s.variant];
    a.first += s.normalized_return;
    a.second += 1;
  }
  std::map<std::string, double> out;
  for (const auto& [v, a] : acc) out[v] = a.first / a.second;
  return out;
}

// ---------------------------------------------------------------- runs

struct RunOutcome {
  AggregateSummary summary;
  std::vector<std::vector<MetricRow>> histories;  // in seed order
  /// seed -> error message for aborted runs.
  std::map<std::uint64_t, std::string> failures;
  bool ok() const { return failures.empty(); }
};

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Trains every seed (in `spec.workers` threads), writes one CSV per seed
/// and the variant's aggregate.json.
inline RunOutcome run(const RunSpec& spec) {
  spec.validate();
  const auto n = spec.seeds.size();
  RunOutcome out;
  out.histories.resize(n);
  std::vector<std::string> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const std::uint64_t seed = spec.seeds[i];
      try {
        TrainOptions opts;
        opts.record_wall_time = spec.record_wall_time;
        const std::string env = spec.env;
        auto result =
            train(spec.config_for(seed), [env] { return make_env(env); }, {}, opts);
        write_metrics_csv(seed_csv_path(spec, seed), result.history);
        out.histories[i] = std::move(result.history);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int w = std::max(1, std::min<int>(spec.workers, static_cast<int>(n)));
  if (w == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < w; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!errors[i].empty()) out.failures[spec.seeds[i]] = errors[i];

  std::vector<std::uint64_t> ok_seeds;
  std::vector<std::vector<MetricRow>> ok_runs;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) continue;
    ok_seeds.push_back(spec.seeds[i]);
    ok_runs.push_back(out.histories[i]);
  }
  out.summary = summarize(spec.env, variant_name(spec), ok_seeds, ok_runs, spec.final_window);
  auto j = to_json(out.summary);
  j["window_fraction"] = spec.final_window;
  j["total_timesteps"] = spec.total_timesteps;
  j["failures"] = nlohmann::json::object();
  for (const auto& [seed, msg] : out.failures) j["failures"][std::to_string(seed)] = msg;
  write_json(variant_dir(spec) / "aggregate.json", j);
  return out;
}

struct SweepRow {
  double value = 0.0;
  std::string variant;
  double mean = 0.0;
  double std = 0.0;
  double entropy_mean = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<RunOutcome> outcomes;
  bool ok() const {
    return std::all_of(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.ok(); });
  }
};

inline std::vector<BandSeries> band_series(const std::vector<std::vector<MetricRow>>& runs,
                                    const std::string& label, bool entropy);

namespace detail {

template <class Apply>
SweepResult sweep(const RunSpec& base, const std::vector<double>& values, const char* name,
                  Apply apply) {
  if (values.empty()) throw std::invalid_argument(std::string(name) + ": no values given");
  SweepResult res;
  std::map<std::string, std::size_t> done;  // variant -> outcome index
  std::vector<BandSeries> curves;
  for (double v : values) {
    RunSpec s = base;
    apply(s, v);
    const std::string variant = variant_name(s);
    auto it = done.find(variant);
    if (it == done.end()) {
      res.outcomes.push_back(run(s));
      it = done.emplace(variant, res.outcomes.size() - 1).first;
      auto c = band_series(res.outcomes.back().histories, variant, false);
      curves.insert(curves.end(), c.begin(), c.end());
    }
    const auto& sum = res.outcomes[it->second].summary;
    res.rows.push_back({v, variant, sum.mean, sum.std, sum.entropy_mean});
  }
  const fs::path dir = fs::path(base.out_dir) / base.env;
  fs::create_directories(dir);
  std::ofstream csv(dir / (std::string(name) + ".csv"), std::ios::binary);
  csv << "value,variant,final_return_mean,final_return_std,final_entropy_mean\n";
  for (const auto& r : res.rows)
    csv << format_double(r.value) << ',' << r.variant << ',' << format_double(r.mean) << ','
        << format_double(r.std) << ',' << format_double(r.entropy_mean) << '\n';
  std::ofstream svg(dir / (std::string(name) + ".svg"), std::ios::binary);
  svg << render_svg_chart(curves, base.env + " " + name, "environment steps", "episodic return");
  return res;
}

}  // namespace detail

/// One RPO variant per alpha over the base spec's seeds. alpha = 0 is PPO.
inline SweepResult sweep_alpha(const RunSpec& base, const std::vector<double>& alphas) {
  return detail::sweep(base, alphas, "sweep_alpha", [](RunSpec& s, double a) {
    s.algo = Algo::Rpo;
    s.rpo_alpha = a;
  });
}

/// Entropy-coefficient sweep with the base spec's algorithm.
inline SweepResult sweep_ent(const RunSpec& base, const std::vector<double>& coefs) {
  return detail::sweep(base, coefs, "sweep_ent", [](RunSpec& s, double c) { s.ent_coef = c; });
}

// ---------------------------------------------------------------- reading runs back

struct VariantRuns {
  std::string env;
  std::string variant;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<MetricRow>> runs;
};

/// Seed CSVs in a variant directory, ordered by seed number.
inline VariantRuns load_variant(const fs::path& dir) {
  VariantRuns v;
  v.variant = dir.filename().string();
  v.env = dir.parent_path().filename().string();
  std::vector<std::pair<std::uint64_t, fs::path>> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (!e.is_regular_file() || name.rfind("seed", 0) != 0 || e.path().extension() != ".csv")
      continue;
    const std::string num = name.substr(4, name.size() - 8);
    char* end = nullptr;
    const auto seed = std::strtoull(num.c_str(), &end, 10);
    if (num.empty() || *end != '\0') continue;
    files.emplace_back(seed, e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& [seed, path] : files) {
    v.seeds.push_back(seed);
    v.runs.push_back(read_metrics_csv(path));
  }
  return v;
}

/// Recomputes every variant summary under `out_dir/<env>/<variant>/`, adds
/// normalized returns, and writes `out_dir/aggregate.json`.
inline std::vector<AggregateSummary> aggregate(const fs::path& out_dir, double fraction = 0.1) {
  std::vector<AggregateSummary> all;
  if (!fs::is_directory(out_dir)) throw std::invalid_argument(out_dir.string() + " is not a directory");
  std::vector<fs::path> env_dirs;
  for (const auto& e : fs::directory_iterator(out_dir))
    if (e.is_directory()) env_dirs.push_back(e.path());
  std::sort(env_dirs.begin(), env_dirs.end());
  for (const auto& env_dir : env_dirs) {
    std::vector<fs::path> variant_dirs;
    for (const auto& e : fs::directory_iterator(env_dir))
      if (e.is_directory()) variant_dirs.push_back(e.path());
    std::sort(variant_dirs.begin(), variant_dirs.end());
    for (const auto& vd : variant_dirs) {
      VariantRuns v = load_variant(vd);
      if (v.runs.empty()) continue;
      all.push_back(summarize(v.env, v.variant, v.seeds, v.runs, fraction));
    }
  }
  const auto scores = normalized_return(all);
  nlohmann::json j;
  j["window_fraction"] = fraction;
  j["summaries"] = nlohmann::json::array();
  for (const auto& s : all) j["summaries"].push_back(to_json(s));
  j["normalized_return"] = scores;
  write_json(out_dir / "aggregate.json", j);
  return all;
}

// ---------------------------------------------------------------- charts

/// Cross-seed mean and population std at every step of the first run; other
/// runs contribute the row whose step is nearest.
inline BandSeries band_from_runs(const std::vector<std::vector<MetricRow>>& runs,
                                 const std::string& label, bool entropy) {
  BandSeries b;
  b.label = label;
  if (runs.empty() || runs.front().empty()) return b;
  auto value = [&](const MetricRow& r) {
    return entropy ? r.policy_entropy : r.episodic_return_mean;
  };
  for (const MetricRow& ref : runs.front()) {
    std::vector<double> vals;
    for (const auto& rows : runs) {
      if (rows.empty()) continue;
      const auto it = std::lower_bound(
          rows.begin(), rows.end(), ref.global_step,
          [](const MetricRow& r, long step) { return r.global_step < step; });
      const MetricRow* best = nullptr;
      if (it != rows.end()) best = &*it;
      if (it != rows.begin()) {
        const MetricRow* prev = &*(it - 1);
        if (!best || ref.global_step - prev->global_step <= best->global_step - ref.global_step)
          best = prev;
      }
      const double v = value(*best);
      if (!std::isnan(v)) vals.push_back(v);
    }
    const auto [m, s] = mean_std(vals);
    b.x.push_back(static_cast<double>(ref.global_step));
    b.mean.push_back(m);
    b.std.push_back(s);
  }
  return b;
}

inline std::vector<BandSeries> band_series(const std::vector<std::vector<MetricRow>>& runs,
                                           const std::string& label, bool entropy) {
  if (runs.empty()) return {};
  return {band_from_runs(runs, label, entropy)};
}

/// Writes return.svg and entropy.svg into `dir`. `dir` is either a variant
/// directory (seed CSVs) or an env directory (one series per variant).
inline std::vector<fs::path> emit_charts(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::invalid_argument(dir.string() + " is not a directory");
  std::vector<VariantRuns> groups;
  VariantRuns direct = load_variant(dir);
  std::string title;
  if (!direct.runs.empty()) {
    groups.push_back(std::move(direct));
    title = groups.front().env + " / " + groups.front().variant;
  } else {
    std::vector<fs::path> subdirs;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory()) subdirs.push_back(e.path());
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& sd : subdirs) {
      VariantRuns v = load_variant(sd);
      if (!v.runs.empty()) groups.push_back(std::move(v));
    }
    title = dir.filename().string();
  }
  if (groups.empty()) throw ParseError(dir.string(), 0, "no seed*.csv files found");
  std::vector<BandSeries> ret, ent;
  for (const auto& g : groups) {
    ret.push_back(band_from_runs(g.runs, g.variant, false));
    ent.push_back(band_from_runs(g.runs, g.variant, true));
  }
  const fs::path ret_path = dir / "return.svg";
  const fs::path ent_path = dir / "entropy.svg";
  std::ofstream(ret_path, std::ios::binary)
      << render_svg_chart(ret, title + " return", "environment steps", "episodic return");
  std::ofstream(ent_path, std::ios::binary)
      << render_svg_chart(ent, title + " entropy", "environment steps", "policy entropy");
  return {ret_path, ent_path};
}

}  // namespace rpolab
