// Actor-critic parameterization: tanh MLP for the action location, a
// state-independent log-scale vector, and a separate tanh MLP value head.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rpolab/distributions.hpp"
#include "rpolab/nn.hpp"

namespace rpolab {

struct NetworkShape {
  int obs_dim = 3;
  int action_dim = 1;
  std::vector<int> hidden{64, 64};
  double hidden_gain = std::sqrt(2.0);
  double actor_out_gain = 0.01;
  double critic_out_gain = 1.0;
  double init_log_scale = 0.0;
};

class ActorCritic {
 public:
  ActorCritic() = default;

  template <class Rng>
  ActorCritic(const NetworkShape& shape, Family family, Rng& rng) : family_(family) {
    std::vector<int> actor_sizes{shape.obs_dim};
    actor_sizes.insert(actor_sizes.end(), shape.hidden.begin(), shape.hidden.end());
    actor_sizes.push_back(shape.action_dim);
    std::vector<int> critic_sizes{shape.obs_dim};
    critic_sizes.insert(critic_sizes.end(), shape.hidden.begin(), shape.hidden.end());
    critic_sizes.push_back(1);
    critic_ = Mlp::create(store_, "critic", critic_sizes, shape.hidden_gain,
                          shape.critic_out_gain, rng);
    actor_ = Mlp::create(store_, "actor", actor_sizes, shape.hidden_gain, shape.actor_out_gain,
                         rng);
    log_scale_ = store_.add("actor.log_scale",
                            Matrix::Constant(shape.action_dim, 1, shape.init_log_scale));
  }

  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }
  std::size_t log_scale_index() const { return log_scale_; }
  Family family() const { return family_; }
  int obs_dim() const { return static_cast<int>(actor_.input_dim(store_)); }
  int action_dim() const { return static_cast<int>(actor_.output_dim(store_)); }

  /// Location for each column of `obs`.
  Matrix loc(const Matrix& obs, MlpCache* cache = nullptr) const {
    return actor_.forward(store_, obs, cache);
  }
  Vector scale() const { return store_[log_scale_].col(0).array().exp(); }
  Vector value(const Matrix& obs, MlpCache* cache = nullptr) const {
    return critic_.forward(store_, obs, cache).row(0).transpose();
  }

  DistParams dist(const Matrix& loc_batch, Eigen::Index column) const {
    return DistParams{family_, loc_batch.col(column), scale()};
  }

 private:
  ParameterStore store_;
  Mlp actor_;
  Mlp critic_;
  std::size_t log_scale_ = 0;
  Family family_ = Family::Gaussian;
};

}  // namespace rpolab
