// On-policy experience collection over a set of environment slots, GAE and
// advantage normalization.
#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include "rpolab/distributions.hpp"
#include "rpolab/envs.hpp"
#include "rpolab/policy.hpp"

namespace rpolab {

struct GaeConfig {
  double gamma = 0.99;
  double lam = 0.95;
};

/// Transition storage, indexed as step * num_envs + slot.
struct RolloutBuffer {
  int num_steps = 0;
  int num_envs = 0;
  Matrix obs;      // obs_dim x capacity
  Matrix actions;  // action_dim x capacity
  Vector rewards;
  Vector dones;  // 1 if the episode ended after this transition
  Vector logp;   // under the unperturbed behaviour distribution
  Vector values;
  Vector advantages;
  Vector returns;
  bool finalized = false;

  RolloutBuffer() = default;
  RolloutBuffer(int steps, int envs, int obs_dim, int action_dim)
      : num_steps(steps),
        num_envs(envs),
        obs(obs_dim, steps * envs),
        actions(action_dim, steps * envs),
        rewards(steps * envs),
        dones(steps * envs),
        logp(steps * envs),
        values(steps * envs) {}

  int capacity() const { return num_steps * num_envs; }
  int index(int step, int slot) const { return step * num_envs + slot; }
};

/// Independent environment instances, each with its own rng stream.
/// The rollout layer owns resets: a slot is reset as soon as it reports done.
class VecEnv {
 public:
  VecEnv(const EnvFactory& factory, int num_envs, std::uint64_t seed) {
    if (num_envs < 1) throw std::invalid_argument("num_envs must be >= 1");
    for (int i = 0; i < num_envs; ++i) {
      envs_.push_back(factory());
      std::seed_seq seq{seed, std::uint64_t{0x5eed}, static_cast<std::uint64_t>(i)};
      rngs_.emplace_back(seq);
    }
    const Spaces sp = envs_.front()->spaces();
    obs_ = Matrix(sp.obs_dim, num_envs);
    running_.assign(num_envs, 0.0);
    for (int i = 0; i < num_envs; ++i) obs_.col(i) = envs_[i]->reset(rngs_[i]);
  }

  int size() const { return static_cast<int>(envs_.size()); }
  Spaces spaces() const { return envs_.front()->spaces(); }
  const Matrix& observations() const { return obs_; }
  Env& env(int i) { return *envs_[i]; }

  /// Steps slot `i`; on done, records the episodic return and resets.
  StepResult step(int i, const Vector& action, std::vector<double>& finished_returns) {
    StepResult r = envs_[i]->step(action);
    running_[i] += r.reward;
    if (r.done) {
      finished_returns.push_back(running_[i]);
      running_[i] = 0.0;
      obs_.col(i) = envs_[i]->reset(rngs_[i]);
    } else {
      obs_.col(i) = r.observation;
    }
    return r;
  }

 private:
  std::vector<std::unique_ptr<Env>> envs_;
  std::vector<EnvRng> rngs_;
  Matrix obs_;
  std::vector<double> running_;
};

struct Rollout {
  RolloutBuffer buffer;
  /// V(s_T) per slot, for the state following the last stored step.
  Vector bootstrap;
  std::vector<double> episode_returns;
};

/// Runs the current policy for `num_steps` steps in every slot. Actions are
/// drawn from the unperturbed distribution and passed to the environment
/// unclipped; the environment applies its own bounds.
template <class Rng>
Rollout collect(const ActorCritic& agent, VecEnv& envs, int num_steps, Rng& rng) {
  if (num_steps < 1) throw std::invalid_argument("num_steps must be >= 1");
  const int n = envs.size();
  Rollout out;
  out.buffer = RolloutBuffer(num_steps, n, agent.obs_dim(), agent.action_dim());
  RolloutBuffer& b = out.buffer;
  const Vector scale = agent.scale();
  for (int t = 0; t < num_steps; ++t) {
    const Matrix obs = envs.observations();
    const Matrix loc = agent.loc(obs);
    const Vector values = agent.value(obs);
    for (int e = 0; e < n; ++e) {
      const int i = b.index(t, e);
      const DistParams d{agent.family(), loc.col(e), scale};
      const Vector a = sample(d, rng);
      b.obs.col(i) = obs.col(e);
      b.actions.col(i) = a;
      b.logp[i] = log_prob(d, a).sum;
      b.values[i] = values[e];
      const StepResult r = envs.step(e, a, out.episode_returns);
      b.rewards[i] = r.reward;
      b.dones[i] = r.done ? 1.0 : 0.0;
    }
  }
  out.bootstrap = agent.value(envs.observations());
  return out;
}

/// Reverse GAE recursion per slot. Truncation and termination are both
/// treated as episode boundaries.
inline void compute_gae(RolloutBuffer& b, const GaeConfig& cfg, const Vector& bootstrap) {
  if (bootstrap.size() != b.num_envs) throw std::invalid_argument("bootstrap size != num_envs");
  b.advantages = Vector::Zero(b.capacity());
  b.returns = Vector::Zero(b.capacity());
  for (int e = 0; e < b.num_envs; ++e) {
    double next_adv = 0.0;
    double next_value = bootstrap[e];
    for (int t = b.num_steps - 1; t >= 0; --t) {
      const int i = b.index(t, e);
      const double live = 1.0 - b.dones[i];
      const double delta = b.rewards[i] + cfg.gamma * next_value * live - b.values[i];
      next_adv = delta + cfg.gamma * cfg.lam * live * next_adv;
      b.advantages[i] = next_adv;
      next_value = b.values[i];
    }
  }
  b.returns = b.advantages + b.values;
  b.finalized = true;
}

struct NormalizedAdvantages {
  Vector values;
  /// Input had (numerically) zero spread; output is all ~0.
  bool degenerate = false;
};

/// Zero mean, unit (sample) standard deviation.
inline NormalizedAdvantages normalize_advantages(const Vector& adv) {
  if (adv.size() < 2) throw std::invalid_argument("normalize_advantages needs >= 2 elements");
  const double mean = adv.mean();
  const double var = (adv.array() - mean).square().sum() / static_cast<double>(adv.size() - 1);
  const double sd = std::sqrt(var);
  NormalizedAdvantages out;
  out.values = (adv.array() - mean) / (sd + 1e-10);
  out.degenerate = sd <= 1e-12 * std::max(1.0, std::abs(mean));
  return out;
}

}  // namespace rpolab
