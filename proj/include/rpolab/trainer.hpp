// PPO with clipped surrogate and clipped value loss. Setting rpo_alpha > 0
// turns it into robust policy optimization: during the update the action
// location is shifted by z ~ U(-alpha, alpha) before the new log-prob is
// taken, while rollout actions and old log-probs stay unperturbed.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpolab/augmentation.hpp"
#include "rpolab/distributions.hpp"
#include "rpolab/envs.hpp"
#include "rpolab/nn.hpp"
#include "rpolab/policy.hpp"
#include "rpolab/rollout.hpp"

namespace rpolab {

using Rng = std::mt19937_64;

/// Non-finite ratio or loss during an update.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  long total_timesteps = 1'000'000;
  int num_steps = 2048;
  int num_envs = 1;
  double learning_rate = 3e-4;
  bool anneal_lr = false;
  double gamma = 0.99;
  double lam = 0.95;
  int num_minibatches = 32;
  int update_epochs = 10;
  double clip_coef = 0.2;
  bool clip_value_loss = true;
  double value_coef = 0.5;
  double ent_coef = 0.0;
  double rpo_alpha = 0.5;
  /// Draw one z per stored transition per update instead of per visit.
  bool cache_perturbation = false;
  Family dist_family = Family::Gaussian;
  AugConfig aug;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
  std::uint64_t seed = 1;
  NetworkShape network;

  int batch_size() const { return num_steps * num_envs; }
  int minibatch_size() const { return batch_size() / num_minibatches; }
  long num_iterations() const { return total_timesteps / batch_size(); }

  void validate() const {
    if (num_steps < 1 || num_envs < 1) throw ConfigError("num_steps and num_envs must be >= 1");
    if (num_minibatches < 1 || batch_size() % num_minibatches != 0)
      throw ConfigError("num_minibatches must divide num_steps * num_envs");
    if (minibatch_size() < 2) throw ConfigError("minibatches need at least two samples");
    if (!(clip_coef > 0.0)) throw ConfigError("clip_coef must be > 0");
    if (!(gamma >= 0.0 && gamma <= 1.0) || !(lam >= 0.0 && lam <= 1.0))
      throw ConfigError("gamma and lam must lie in [0, 1]");
    if (!(rpo_alpha >= 0.0)) throw ConfigError("rpo_alpha must be >= 0");
    if (update_epochs < 1) throw ConfigError("update_epochs must be >= 1");
    if (total_timesteps < batch_size()) throw ConfigError("total_timesteps < one rollout");
    validate_aug(aug, dist_family);
  }

 private:
  static void validate_aug(const AugConfig& a, Family f) { rpolab::validate(a, f); }
};

/// Entropy-coefficient presets used for the regularization baselines.
inline const std::vector<double>& entropy_coef_presets() {
  static const std::vector<double> v{0.0, 0.01, 0.05, 0.5, 1.0, 10.0};
  return v;
}

struct LossReport {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy_bonus = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double drac_loss = 0.0;
  /// Mean ratio and approximate KL of the very first minibatch.
  double first_ratio_mean = 0.0;
  double first_approx_kl = 0.0;
  /// Some minibatch had zero-spread advantages.
  bool degenerate_advantages = false;
};

struct PolicyLossResult {
  double loss = 0.0;
  /// d loss / d new_logp for each sample.
  Vector grad;
  double ratio_mean = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

/// -mean(min(r A, clip(r, 1-eps, 1+eps) A)) with r = exp(new - old).
inline PolicyLossResult policy_loss(const Vector& new_logp, const Vector& old_logp,
                                    const Vector& advantages, double clip_coef) {
  const Eigen::Index n = new_logp.size();
  if (old_logp.size() != n || advantages.size() != n || n == 0)
    throw std::invalid_argument("policy_loss: arrays must be non-empty and the same length");
  PolicyLossResult r;
  r.grad.resize(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double log_ratio = new_logp[i] - old_logp[i];
    const double ratio = std::exp(log_ratio);
    if (!std::isfinite(ratio)) {
      std::ostringstream msg;
      msg << "non-finite probability ratio at sample " << i << " (new logp " << new_logp[i]
          << ", old logp " << old_logp[i] << ")";
      throw TrainingError(msg.str());
    }
    const double a = advantages[i];
    const double unclipped = ratio * a;
    const double clipped = std::clamp(ratio, 1.0 - clip_coef, 1.0 + clip_coef) * a;
    r.loss -= std::min(unclipped, clipped);
    // Gradient only flows when the unclipped term is the active one.
    r.grad[i] = unclipped <= clipped ? -a * ratio * inv_n : 0.0;
    r.ratio_mean += ratio * inv_n;
    r.approx_kl += ((ratio - 1.0) - log_ratio) * inv_n;
    if (std::abs(ratio - 1.0) > clip_coef) r.clip_fraction += inv_n;
  }
  r.loss /= static_cast<double>(n);  // sum first, divide once
  return r;
}

struct ValueLossResult {
  double loss = 0.0;
  /// d loss / d new_values.
  Vector grad;
};

/// Clipped: 0.5 mean(max((V-R)^2, (V_old + clip(V-V_old, -eps, eps) - R)^2)).
/// Unclipped: 0.5 mean((V-R)^2).
inline ValueLossResult value_loss(const Vector& new_values, const Vector& old_values,
                                  const Vector& returns, double clip_coef, bool clipped) {
  const Eigen::Index n = new_values.size();
  if (old_values.size() != n || returns.size() != n || n == 0)
    throw std::invalid_argument("value_loss: arrays must be non-empty and the same length");
  ValueLossResult r;
  r.grad.resize(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double err = new_values[i] - returns[i];
    if (!clipped) {
      r.loss += err * err;
      r.grad[i] = err * inv_n;
      continue;
    }
    const double delta = new_values[i] - old_values[i];
    const double delta_c = std::clamp(delta, -clip_coef, clip_coef);
    const double err_c = old_values[i] + delta_c - returns[i];
    if (err * err >= err_c * err_c) {
      r.loss += err * err;
      r.grad[i] = err * inv_n;
    } else {
      r.loss += err_c * err_c;
      r.grad[i] = delta == delta_c ? err_c * inv_n : 0.0;
    }
  }
  r.loss *= 0.5 / static_cast<double>(n);
  return r;
}

/// Mean over states of the summed per-dimension conditional entropy.
inline double logged_entropy(const std::vector<DistParams>& batch) {
  if (batch.empty()) throw std::invalid_argument("logged_entropy: empty batch");
  double s = 0.0;
  for (const auto& p : batch) s += entropy(p);
  return s / static_cast<double>(batch.size());
}

/// Independent random streams derived from one run seed.
struct RunStreams {
  Rng init;
  Rng main;
  Rng aug;
  std::uint64_t env_seed;

  explicit RunStreams(std::uint64_t seed)
      : init(seed_for(seed, 1)), main(seed_for(seed, 2)), aug(seed_for(seed, 3)),
        env_seed(seed) {}

 private:
  static Rng seed_for(std::uint64_t seed, std::uint64_t tag) {
    std::seed_seq seq{seed, tag, std::uint64_t{0x7270'6f6c'6162}};
    return Rng(seq);
  }
};

/// One minibatch of stored transitions, plus the location shift applied
/// when re-evaluating log-probs (all zero for plain PPO).
struct Minibatch {
  Matrix obs;
  Matrix actions;
  Vector old_logp;
  Vector old_values;
  Vector returns;
  Vector advantages;
  Matrix loc_shift;
};

struct MinibatchLoss {
  double total = 0.0;
  double entropy = 0.0;
  PolicyLossResult policy;
  ValueLossResult value;
};

/// policy_loss + value_coef * value_loss - ent_coef * entropy for one
/// minibatch, with its exact gradient added into `grads` when given.
/// Advantages are used as stored (normalize before calling).
inline MinibatchLoss minibatch_loss(const ActorCritic& agent, const Minibatch& mb,
                                    const TrainConfig& cfg, Gradients* grads) {
  const Eigen::Index n = mb.obs.cols();
  const Eigen::Index adim = mb.actions.rows();
  const Family family = agent.family();
  MlpCache actor_cache, critic_cache;
  const Matrix loc = agent.loc(mb.obs, grads ? &actor_cache : nullptr);
  const Vector scale = agent.scale();

  Vector new_logp = Vector::Zero(n);
  Matrix dlogp_dloc(adim, n);
  Matrix dlogp_dscale(adim, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index d = 0; d < adim; ++d) {
      const double mu = loc(d, j) + mb.loc_shift(d, j);
      new_logp[j] += log_density(family, mu, scale[d], mb.actions(d, j));
      log_density_grad(family, mu, scale[d], mb.actions(d, j), dlogp_dloc(d, j),
                       dlogp_dscale(d, j));
    }
  }

  MinibatchLoss out;
  out.policy = policy_loss(new_logp, mb.old_logp, mb.advantages, cfg.clip_coef);
  const Vector new_values = agent.value(mb.obs, grads ? &critic_cache : nullptr);
  out.value = value_loss(new_values, mb.old_values, mb.returns, cfg.clip_coef,
                         cfg.clip_value_loss);
  for (Eigen::Index d = 0; d < adim; ++d) out.entropy += entropy_1d(family, scale[d]);
  out.total = out.policy.loss + cfg.value_coef * out.value.loss - cfg.ent_coef * out.entropy;
  if (!grads) return out;

  // The shift is a constant, so d/d loc equals d/d shifted loc.
  const Matrix d_loc = dlogp_dloc.array().rowwise() * out.policy.grad.transpose().array();
  agent.actor().backward(agent.store(), actor_cache, d_loc, *grads);
  auto& d_log_scale = (*grads)[agent.log_scale_index()];
  for (Eigen::Index d = 0; d < adim; ++d) {
    // d entropy_1d / d log(scale) == 1 for every supported family.
    d_log_scale(d, 0) +=
        (dlogp_dscale.row(d).transpose().array() * out.policy.grad.array()).sum() * scale[d] -
        cfg.ent_coef;
  }
  const Matrix d_value = (cfg.value_coef * out.value.grad).transpose();
  agent.critic().backward(agent.store(), critic_cache, d_value, *grads);
  return out;
}

/// Runs `cfg.update_epochs` passes of minibatch PPO/RPO over a finalized
/// buffer. `rng` drives shuffling and the location perturbation; `aug_rng`
/// drives DRAC augmentation.
inline LossReport update(ActorCritic& agent, AdamState& adam, const RolloutBuffer& buffer,
                         const TrainConfig& cfg, Rng& rng, Rng& aug_rng) {
  if (!buffer.finalized) throw std::logic_error("update: buffer has no advantages yet");
  const int batch = buffer.capacity();
  if (batch % cfg.num_minibatches != 0)
    throw ConfigError("num_minibatches must divide the buffer size");
  const int mbs = batch / cfg.num_minibatches;
  const Eigen::Index adim = buffer.actions.rows();
  const bool perturb = cfg.rpo_alpha > 0.0;
  std::uniform_real_distribution<double> shift(-cfg.rpo_alpha, cfg.rpo_alpha);

  Matrix cached_z;
  if (perturb && cfg.cache_perturbation) {
    cached_z.resize(adim, batch);
    for (int i = 0; i < batch; ++i)
      for (Eigen::Index d = 0; d < adim; ++d) cached_z(d, i) = shift(rng);
  }

  std::vector<int> order(batch);
  std::iota(order.begin(), order.end(), 0);
  Gradients grads = agent.store().zeros_like();
  LossReport report;
  int updates = 0;

  Minibatch mb{Matrix(buffer.obs.rows(), mbs), Matrix(adim, mbs), Vector(mbs), Vector(mbs),
               Vector(mbs), Vector(mbs), Matrix::Zero(adim, mbs)};

  for (int epoch = 0; epoch < cfg.update_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < batch; start += mbs) {
      for (int j = 0; j < mbs; ++j) {
        const int i = order[start + j];
        mb.obs.col(j) = buffer.obs.col(i);
        mb.actions.col(j) = buffer.actions.col(i);
        mb.old_logp[j] = buffer.logp[i];
        mb.old_values[j] = buffer.values[i];
        mb.returns[j] = buffer.returns[i];
        mb.advantages[j] = buffer.advantages[i];
        if (perturb) {
          // Fresh z for every visit unless caching was requested.
          for (Eigen::Index d = 0; d < adim; ++d)
            mb.loc_shift(d, j) = cfg.cache_perturbation ? cached_z(d, i) : shift(rng);
        }
      }
      if (cfg.normalize_advantages) {
        auto norm = normalize_advantages(mb.advantages);
        mb.advantages = std::move(norm.values);
        report.degenerate_advantages |= norm.degenerate;
      }

      grads.set_zero();
      const MinibatchLoss loss = minibatch_loss(agent, mb, cfg, &grads);
      if (!std::isfinite(loss.total)) {
        std::ostringstream msg;
        msg << "non-finite loss (policy " << loss.policy.loss << ", value " << loss.value.loss
            << ", entropy " << loss.entropy << ") at epoch " << epoch << ", minibatch "
            << start / mbs;
        throw TrainingError(msg.str());
      }
      if (cfg.aug.mode == AugMode::Drac)
        report.drac_loss += drac_regularizer(agent, mb.obs, cfg.aug, aug_rng, grads).loss;

      clip_grad_norm(grads, cfg.max_grad_norm);
      adam_step(agent.store(), adam, grads);
      if (!agent.store().all_finite())
        throw TrainingError("parameters became non-finite after an optimizer step");

      if (updates == 0) {
        report.first_ratio_mean = loss.policy.ratio_mean;
        report.first_approx_kl = loss.policy.approx_kl;
      }
      ++updates;
      report.policy_loss += loss.policy.loss;
      report.value_loss += loss.value.loss;
      report.entropy_bonus += loss.entropy;
      report.approx_kl += loss.policy.approx_kl;
      report.clip_fraction += loss.policy.clip_fraction;
    }
  }
  const double inv = 1.0 / updates;
  report.policy_loss *= inv;
  report.value_loss *= inv;
  report.entropy_bonus *= inv;
  report.approx_kl *= inv;
  report.clip_fraction *= inv;
  report.drac_loss *= inv;
  return report;
}

/// One logged iteration.
struct MetricRow {
  long global_step = 0;
  /// NaN when no episode finished during the iteration.
  double episodic_return_mean = std::numeric_limits<double>::quiet_NaN();
  double policy_entropy = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double wall_time_s = 0.0;
};

using MetricSink = std::function<void(const MetricRow&)>;

struct TrainResult {
  ActorCritic agent;
  std::vector<MetricRow> history;
};

struct TrainOptions {
  /// Record elapsed wall-clock seconds; off keeps metric rows reproducible.
  bool record_wall_time = false;
  /// Stop after this many iterations (0 = run to total_timesteps).
  long max_iterations = 0;
};

/// collect -> GAE -> (augment) -> update, until total_timesteps is consumed.
inline TrainResult train(const TrainConfig& cfg, const EnvFactory& env_factory,
                         const MetricSink& sink = {}, const TrainOptions& opts = {}) {
  cfg.validate();
  RunStreams streams(cfg.seed);
  VecEnv envs(env_factory, cfg.num_envs, streams.env_seed);
  const Spaces sp = envs.spaces();
  NetworkShape shape = cfg.network;
  shape.obs_dim = sp.obs_dim;
  shape.action_dim = sp.action_dim;

  TrainResult result{ActorCritic(shape, cfg.dist_family, streams.init), {}};
  ActorCritic& agent = result.agent;
  AdamState adam = AdamState::for_store(agent.store(), cfg.learning_rate);
  const GaeConfig gae{cfg.gamma, cfg.lam};
  const auto t0 = std::chrono::steady_clock::now();

  long iterations = cfg.num_iterations();
  if (opts.max_iterations > 0) iterations = std::min(iterations, opts.max_iterations);
  long global_step = 0;
  for (long it = 0; it < iterations; ++it) {
    if (cfg.anneal_lr)
      adam.learning_rate =
          cfg.learning_rate * (1.0 - static_cast<double>(it) / cfg.num_iterations());
    Rollout ro = collect(agent, envs, cfg.num_steps, streams.main);
    global_step += ro.buffer.capacity();
    compute_gae(ro.buffer, gae, ro.bootstrap);
    if (cfg.aug.mode == AugMode::Rad) rad_update_hook(ro.buffer, cfg.aug, streams.aug);
    const LossReport rep = update(agent, adam, ro.buffer, cfg, streams.main, streams.aug);

    MetricRow row;
    row.global_step = global_step;
    if (!ro.episode_returns.empty())
      row.episodic_return_mean =
          std::accumulate(ro.episode_returns.begin(), ro.episode_returns.end(), 0.0) /
          static_cast<double>(ro.episode_returns.size());
    const Matrix loc = agent.loc(ro.buffer.obs);
    std::vector<DistParams> dists;
    dists.reserve(loc.cols());
    for (Eigen::Index j = 0; j < loc.cols(); ++j) dists.push_back(agent.dist(loc, j));
    row.policy_entropy = logged_entropy(dists);
    row.policy_loss = rep.policy_loss;
    row.value_loss = rep.value_loss;
    row.approx_kl = rep.approx_kl;
    row.clip_fraction = rep.clip_fraction;
    if (opts.record_wall_time)
      row.wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(row);
    if (sink) sink(row);
  }
  return result;
}

}  // namespace rpolab
