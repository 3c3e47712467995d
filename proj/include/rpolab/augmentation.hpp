// Random amplitude scaling of vector observations, used two ways: as a
// preprocessing step on stored rollouts (RAD) and as a consistency
// regularizer between clean and augmented states (DRAC).
#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include "rpolab/distributions.hpp"
#include "rpolab/policy.hpp"
#include "rpolab/rollout.hpp"

namespace rpolab {

enum class AugMode { None, Rad, Drac };

inline std::string_view to_string(AugMode m) {
  switch (m) {
    case AugMode::None: return "none";
    case AugMode::Rad: return "rad";
    case AugMode::Drac: return "drac";
  }
  return "?";
}

inline AugMode parse_aug_mode(std::string_view s) {
  if (s == "none") return AugMode::None;
  if (s == "rad") return AugMode::Rad;
  if (s == "drac") return AugMode::Drac;
  throw std::invalid_argument("unknown augmentation mode '" + std::string(s) + "'");
}

struct AugConfig {
  AugMode mode = AugMode::None;
  double scale_low = 0.6;
  double scale_high = 1.2;
  double drac_coef = 0.1;
};

/// Rejects bad bounds, and DRAC on a family without a closed-form KL.
inline void validate(const AugConfig& cfg, Family family) {
  if (!(cfg.scale_low > 0.0) || !(cfg.scale_low <= cfg.scale_high))
    throw ConfigError("augmentation needs 0 < scale_low <= scale_high");
  if (cfg.drac_coef < 0.0) throw ConfigError("drac_coef must be >= 0");
  if (cfg.mode == AugMode::Drac && family == Family::Gumbel)
    throw ConfigError("drac needs a closed-form KL; gumbel is not supported");
}

/// state * u with a single u ~ U(scale_low, scale_high) for the whole vector.
template <class Rng>
Vector random_amplitude_scale(const Vector& state, const AugConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> unif(cfg.scale_low, cfg.scale_high);
  return state * unif(rng);
}

/// Replaces every stored observation with an augmented copy. Log-probs,
/// values and advantages keep the values computed on raw states.
template <class Rng>
void rad_update_hook(RolloutBuffer& buffer, const AugConfig& cfg, Rng& rng) {
  for (Eigen::Index i = 0; i < buffer.obs.cols(); ++i)
    buffer.obs.col(i) = random_amplitude_scale(Vector(buffer.obs.col(i)), cfg, rng);
}

struct KlTerm {
  double kl = 0.0;
  double d_loc_q = 0.0;        // d KL / d loc_q
  double d_log_scale_q = 0.0;  // d KL / d log(scale_q)
};

/// KL(p || q) for one dimension of two same-family distributions, with
/// partials in the q arguments only.
inline KlTerm kl_divergence_1d(Family family, double loc_p, double scale_p, double loc_q,
                               double scale_q) {
  KlTerm out;
  const double diff = loc_p - loc_q;
  switch (family) {
    case Family::Gaussian: {
      const double sq = scale_q * scale_q;
      out.kl = std::log(scale_q / scale_p) + (scale_p * scale_p + diff * diff) / (2.0 * sq) - 0.5;
      out.d_loc_q = -diff / sq;
      out.d_log_scale_q = 1.0 - (scale_p * scale_p + diff * diff) / sq;
      return out;
    }
    case Family::Laplace: {
      const double ad = std::abs(diff);
      const double e = std::exp(-ad / scale_p);
      const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      out.kl = std::log(scale_q / scale_p) + ad / scale_q + scale_p / scale_q * e - 1.0;
      out.d_loc_q = sgn * (e - 1.0) / scale_q;
      out.d_log_scale_q = 1.0 - ad / scale_q - scale_p / scale_q * e;
      return out;
    }
    case Family::Gumbel:
      break;
  }
  throw ConfigError("no closed-form KL for family " + std::string(to_string(family)));
}

struct DracResult {
  double loss = 0.0;
  double policy_kl = 0.0;
  double value_gap = 0.0;
};

/// kappa * [mean KL(pi(.|s) || pi(.|aug s)) + mean (V(s) - V(aug s))^2].
/// Gradients flow only through the augmented branch and are added into
/// `grads` already multiplied by kappa.
template <class Rng>
DracResult drac_regularizer(const ActorCritic& agent, const Matrix& states, const AugConfig& cfg,
                            Rng& rng, Gradients& grads) {
  const Eigen::Index m = states.cols();
  Matrix aug(states.rows(), m);
  for (Eigen::Index j = 0; j < m; ++j)
    aug.col(j) = random_amplitude_scale(Vector(states.col(j)), cfg, rng);

  const Matrix loc_clean = agent.loc(states);
  const Vector v_clean = agent.value(states);
  MlpCache actor_cache, critic_cache;
  const Matrix loc_aug = agent.loc(aug, &actor_cache);
  const Vector v_aug = agent.value(aug, &critic_cache);
  const Vector scale = agent.scale();

  const double inv_m = 1.0 / static_cast<double>(m);
  DracResult out;
  Matrix d_loc(loc_aug.rows(), m);
  Vector d_log_scale = Vector::Zero(scale.size());
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index d = 0; d < loc_aug.rows(); ++d) {
      const KlTerm t =
          kl_divergence_1d(agent.family(), loc_clean(d, j), scale[d], loc_aug(d, j), scale[d]);
      out.policy_kl += t.kl;
      d_loc(d, j) = cfg.drac_coef * inv_m * t.d_loc_q;
      d_log_scale[d] += cfg.drac_coef * inv_m * t.d_log_scale_q;
    }
  }
  out.policy_kl *= inv_m;
  const Vector gap = v_clean - v_aug;
  out.value_gap = gap.squaredNorm() * inv_m;
  out.loss = cfg.drac_coef * (out.policy_kl + out.value_gap);

  agent.actor().backward(agent.store(), actor_cache, d_loc, grads);
  grads[agent.log_scale_index()].col(0) += d_log_scale;
  const Matrix d_value = (-2.0 * cfg.drac_coef * inv_m * gap).transpose();
  agent.critic().backward(agent.store(), critic_cache, d_value, grads);
  return out;
}

}  // namespace rpolab
