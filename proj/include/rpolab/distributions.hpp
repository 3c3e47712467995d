// Location-scale action distributions (Gaussian, Laplace, Gumbel) and the
// uniform mean perturbation used by robust policy optimization.
#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace rpolab {

enum class Family { Gaussian, Laplace, Gumbel };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::Gaussian: return "gaussian";
    case Family::Laplace: return "laplace";
    case Family::Gumbel: return "gumbel";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  if (s == "gaussian") return Family::Gaussian;
  if (s == "laplace") return Family::Laplace;
  if (s == "gumbel") return Family::Gumbel;
  throw std::invalid_argument("unknown distribution family '" + std::string(s) + "'");
}

inline constexpr double kEulerGamma = std::numbers::egamma;

/// Per-dimension location and scale of a factorized action distribution.
/// For Gaussian the scale is the standard deviation, for Laplace the
/// diversity b, for Gumbel the scale beta.
struct DistParams {
  Family family = Family::Gaussian;
  Eigen::VectorXd loc;
  Eigen::VectorXd scale;

  Eigen::Index dim() const { return loc.size(); }

  bool valid() const {
    return loc.size() == scale.size() && loc.allFinite() && scale.allFinite() &&
           (scale.array() > 0.0).all();
  }
};

/// Half-width of the U(-alpha, alpha) shift added to the location.
struct PerturbSpec {
  double alpha = 0.5;
};

struct LogProb {
  Eigen::VectorXd per_dim;
  double sum = 0.0;
};

/// Partials of the summed log-density with respect to loc and scale.
struct LogProbGrad {
  Eigen::VectorXd d_loc;
  Eigen::VectorXd d_scale;
};

// Scalar kernels. Everything below is built from these.

inline double log_density(Family f, double loc, double scale, double a) {
  switch (f) {
    case Family::Gaussian: {
      const double z = (a - loc) / scale;
      return -0.5 * z * z - std::log(scale) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    case Family::Laplace:
      return -std::abs(a - loc) / scale - std::log(2.0 * scale);
    case Family::Gumbel: {
      const double z = (a - loc) / scale;
      return -z - std::exp(-z) - std::log(scale);
    }
  }
  return 0.0;
}

inline void log_density_grad(Family f, double loc, double scale, double a, double& d_loc,
                             double& d_scale) {
  switch (f) {
    case Family::Gaussian: {
      const double diff = a - loc;
      d_loc = diff / (scale * scale);
      d_scale = (diff * diff - scale * scale) / (scale * scale * scale);
      return;
    }
    case Family::Laplace: {
      const double diff = a - loc;
      d_loc = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) / scale;
      d_scale = std::abs(diff) / (scale * scale) - 1.0 / scale;
      return;
    }
    case Family::Gumbel: {
      const double z = (a - loc) / scale;
      const double ez = std::exp(-z);
      d_loc = (1.0 - ez) / scale;
      d_scale = (z - z * ez - 1.0) / scale;
      return;
    }
  }
}

/// Differential entropy of one dimension. Location-free for all families.
inline double entropy_1d(Family f, double scale) {
  switch (f) {
    case Family::Gaussian:
      return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * scale * scale);
    case Family::Laplace: return 1.0 + std::log(2.0 * scale);
    case Family::Gumbel: return std::log(scale) + kEulerGamma + 1.0;
  }
  return 0.0;
}

template <class Rng>
double sample_1d(Family f, double loc, double scale, Rng& rng) {
  switch (f) {
    case Family::Gaussian: {
      std::normal_distribution<double> normal(loc, scale);
      return normal(rng);
    }
    case Family::Laplace: {
      // Inverse CDF on u in (-1/2, 1/2).
      std::uniform_real_distribution<double> unif(-0.5, 0.5);
      double u = unif(rng);
      while (u == -0.5) u = unif(rng);
      const double s = u < 0.0 ? -1.0 : 1.0;
      return loc - scale * s * std::log1p(-2.0 * std::abs(u));
    }
    case Family::Gumbel: {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      double u = unif(rng);
      while (u == 0.0) u = unif(rng);
      return loc - scale * std::log(-std::log(u));
    }
  }
  return loc;
}

template <class Rng>
Eigen::VectorXd sample(const DistParams& p, Rng& rng) {
  Eigen::VectorXd a(p.dim());
  for (Eigen::Index i = 0; i < p.dim(); ++i) a[i] = sample_1d(p.family, p.loc[i], p.scale[i], rng);
  return a;
}

inline LogProb log_prob(const DistParams& p, const Eigen::VectorXd& action) {
  if (action.size() != p.dim()) throw std::invalid_argument("log_prob: action dimension mismatch");
  LogProb out;
  out.per_dim.resize(p.dim());
  for (Eigen::Index i = 0; i < p.dim(); ++i)
    out.per_dim[i] = log_density(p.family, p.loc[i], p.scale[i], action[i]);
  out.sum = out.per_dim.sum();
  return out;
}

inline LogProbGrad log_prob_grad(const DistParams& p, const Eigen::VectorXd& action) {
  if (action.size() != p.dim())
    throw std::invalid_argument("log_prob_grad: action dimension mismatch");
  LogProbGrad g{Eigen::VectorXd(p.dim()), Eigen::VectorXd(p.dim())};
  for (Eigen::Index i = 0; i < p.dim(); ++i)
    log_density_grad(p.family, p.loc[i], p.scale[i], action[i], g.d_loc[i], g.d_scale[i]);
  return g;
}

/// Summed over dimensions.
inline double entropy(const DistParams& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.dim(); ++i) h += entropy_1d(p.family, p.scale[i]);
  return h;
}

/// Shifts every location component by an independent U(-alpha, alpha) draw.
/// alpha == 0 returns the input untouched and consumes no randomness.
template <class Rng>
DistParams perturb_loc(const DistParams& p, const PerturbSpec& spec, Rng& rng) {
  if (!(spec.alpha >= 0.0)) throw std::invalid_argument("perturbation alpha must be >= 0");
  DistParams out = p;
  if (spec.alpha == 0.0) return out;
  std::uniform_real_distribution<double> unif(-spec.alpha, spec.alpha);
  for (Eigen::Index i = 0; i < out.dim(); ++i) out.loc[i] += unif(rng);
  return out;
}

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double gaussian_density(double mu, double sigma, double a) {
  const double z = (a - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

/// Marginal density of a ~ N(mu + z, sigma), z ~ U(-alpha, alpha).
inline double effective_density_gaussian_uniform(double mu, double sigma, double alpha, double a) {
  return (standard_normal_cdf((a - mu + alpha) / sigma) -
          standard_normal_cdf((a - mu - alpha) / sigma)) /
         (2.0 * alpha);
}

/// Differential entropy of the perturbed-Gaussian marginal, by composite
/// Simpson quadrature over mu +- (alpha + 12 sigma). Diagnostic only; the
/// trainer logs the conditional (closed-form) entropy.
inline double marginal_entropy_gaussian_uniform(double sigma, double alpha, int intervals = 20000) {
  if (alpha == 0.0) return entropy_1d(Family::Gaussian, sigma);
  const double half = alpha + 12.0 * sigma;
  const double h = 2.0 * half / intervals;
  auto f = [&](double a) {
    const double p = effective_density_gaussian_uniform(0.0, sigma, alpha, a);
    return p > 0.0 ? -p * std::log(p) : 0.0;
  };
  double s = f(-half) + f(half);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * f(-half + i * h);
  return s * h / 3.0;
}

}  // namespace rpolab
