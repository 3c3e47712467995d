// Small continuous-control environments: Pendulum, continuous CartPole and a
// 2-d point mass. Dynamics follow the classic-control definitions.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace rpolab {

using EnvRng = std::mt19937_64;

/// Raised when an environment is driven outside its episodic contract.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Spaces {
  int obs_dim;
  int action_dim;
  double action_low;
  double action_high;
};

struct StepResult {
  Eigen::VectorXd observation;
  double reward = 0.0;
  /// Set on termination and on horizon truncation alike.
  bool done = false;
};

class Env {
 public:
  virtual ~Env() = default;

  virtual Spaces spaces() const = 0;
  virtual int horizon() const = 0;
  virtual std::string_view name() const = 0;

  Eigen::VectorXd reset(EnvRng& rng) {
    steps_ = 0;
    done_ = false;
    reset_state(rng);
    return observe();
  }

  StepResult step(const Eigen::VectorXd& action) {
    if (done_) throw UsageError(std::string(name()) + ": step() after episode end; call reset()");
    if (action.size() != spaces().action_dim)
      throw UsageError(std::string(name()) + ": action has wrong dimension");
    StepResult r;
    bool terminated = false;
    r.reward = advance(action, terminated);
    ++steps_;
    done_ = terminated || steps_ >= horizon();
    r.done = done_;
    r.observation = observe();
    return r;
  }

  int steps() const { return steps_; }
  bool done() const { return done_; }

  /// Raw physical state, environment specific.
  virtual Eigen::VectorXd state() const = 0;
  /// Overwrites the physical state and starts a fresh episode from it.
  void set_state(const Eigen::VectorXd& s) {
    load_state(s);
    steps_ = 0;
    done_ = false;
  }

  virtual Eigen::VectorXd observe() const = 0;

 protected:
  virtual void reset_state(EnvRng& rng) = 0;
  virtual void load_state(const Eigen::VectorXd& s) = 0;
  virtual double advance(const Eigen::VectorXd& action, bool& terminated) = 0;

 private:
  int steps_ = 0;
  bool done_ = false;
};

/// Pendulum-v1: obs (cos th, sin th, thdot), torque in [-2, 2], 200 steps.
class Pendulum final : public Env {
 public:
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kDt = 0.05;
  static constexpr double kG = 10.0;
  static constexpr double kM = 1.0;
  static constexpr double kL = 1.0;

  Spaces spaces() const override { return {3, 1, -kMaxTorque, kMaxTorque}; }
  int horizon() const override { return 200; }
  std::string_view name() const override { return "pendulum"; }

  Eigen::VectorXd state() const override { return Eigen::Vector2d(theta_, theta_dot_); }
  Eigen::VectorXd observe() const override {
    return Eigen::Vector3d(std::cos(theta_), std::sin(theta_), theta_dot_);
  }

  static double wrap_angle(double x) {
    return std::fmod(std::fmod(x + std::numbers::pi, 2.0 * std::numbers::pi) +
                         2.0 * std::numbers::pi,
                     2.0 * std::numbers::pi) -
           std::numbers::pi;
  }

 protected:
  void reset_state(EnvRng& rng) override {
    std::uniform_real_distribution<double> th(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> thd(-1.0, 1.0);
    theta_ = th(rng);
    theta_dot_ = thd(rng);
  }
  void load_state(const Eigen::VectorXd& s) override {
    theta_ = s[0];
    theta_dot_ = s[1];
  }
  double advance(const Eigen::VectorXd& action, bool& terminated) override {
    const double u = std::clamp(action[0], -kMaxTorque, kMaxTorque);
    const double th = wrap_angle(theta_);
    const double cost = th * th + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;
    double new_thdot = theta_dot_ + (3.0 * kG / (2.0 * kL) * std::sin(theta_) +
                                     3.0 / (kM * kL * kL) * u) * kDt;
    new_thdot = std::clamp(new_thdot, -kMaxSpeed, kMaxSpeed);
    theta_ += new_thdot * kDt;
    theta_dot_ = new_thdot;
    terminated = false;
    return -cost;
  }

 private:
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
};

/// Cart-pole with a continuous force 10 * clip(a, -1, 1); +1 per step,
/// terminates when |x| > 2.4 or |theta| > 12 degrees, 500 steps.
class CartPoleContinuous final : public Env {
 public:
  static constexpr double kGravity = 9.8;
  static constexpr double kMassCart = 1.0;
  static constexpr double kMassPole = 0.1;
  static constexpr double kTotalMass = kMassCart + kMassPole;
  static constexpr double kHalfLength = 0.5;
  static constexpr double kPoleMassLength = kMassPole * kHalfLength;
  static constexpr double kForceMag = 10.0;
  static constexpr double kTau = 0.02;
  static constexpr double kThetaLimit = 12.0 * 2.0 * std::numbers::pi / 360.0;
  static constexpr double kXLimit = 2.4;

  Spaces spaces() const override { return {4, 1, -1.0, 1.0}; }
  int horizon() const override { return 500; }
  std::string_view name() const override { return "cartpole"; }

  Eigen::VectorXd state() const override { return s_; }
  Eigen::VectorXd observe() const override { return s_; }

 protected:
  void reset_state(EnvRng& rng) override {
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (int i = 0; i < 4; ++i) s_[i] = u(rng);
  }
  void load_state(const Eigen::VectorXd& s) override { s_ = s; }
  double advance(const Eigen::VectorXd& action, bool& terminated) override {
    const double force = kForceMag * std::clamp(action[0], -1.0, 1.0);
    const double x = s_[0], x_dot = s_[1], theta = s_[2], theta_dot = s_[3];
    const double c = std::cos(theta), s = std::sin(theta);
    const double temp = (force + kPoleMassLength * theta_dot * theta_dot * s) / kTotalMass;
    const double theta_acc =
        (kGravity * s - c * temp) /
        (kHalfLength * (4.0 / 3.0 - kMassPole * c * c / kTotalMass));
    const double x_acc = temp - kPoleMassLength * theta_acc * c / kTotalMass;
    s_[0] = x + kTau * x_dot;
    s_[1] = x_dot + kTau * x_acc;
    s_[2] = theta + kTau * theta_dot;
    s_[3] = theta_dot + kTau * theta_acc;
    terminated = std::abs(s_[0]) > kXLimit || std::abs(s_[2]) > kThetaLimit;
    return 1.0;
  }

 private:
  Eigen::Vector4d s_ = Eigen::Vector4d::Zero();
};

/// Smoke-test task, not from any benchmark suite: a 2-d double integrator in
/// the box [-2, 2]^2 chasing a goal drawn from [-1, 1]^2.
/// obs = (position, velocity, goal), reward = -|position - goal|.
class PointMass2D final : public Env {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kArena = 2.0;
  static constexpr double kGoalRange = 1.0;
  /// Largest possible distance between a position and a goal.
  static constexpr double kMaxDistance = (kArena + kGoalRange) * std::numbers::sqrt2;

  Spaces spaces() const override { return {6, 2, -1.0, 1.0}; }
  int horizon() const override { return 100; }
  std::string_view name() const override { return "pointmass"; }

  Eigen::VectorXd state() const override { return observe(); }
  Eigen::VectorXd observe() const override {
    Eigen::VectorXd o(6);
    o << pos_, vel_, goal_;
    return o;
  }

 protected:
  void reset_state(EnvRng& rng) override {
    std::uniform_real_distribution<double> u(-kGoalRange, kGoalRange);
    pos_ = Eigen::Vector2d(u(rng), u(rng));
    vel_.setZero();
    goal_ = Eigen::Vector2d(u(rng), u(rng));
  }
  void load_state(const Eigen::VectorXd& s) override {
    pos_ = s.segment<2>(0);
    vel_ = s.segment<2>(2);
    goal_ = s.segment<2>(4);
  }
  double advance(const Eigen::VectorXd& action, bool& terminated) override {
    for (int i = 0; i < 2; ++i) {
      const double acc = std::clamp(action[i], -1.0, 1.0);
      vel_[i] += acc * kDt;
      pos_[i] += vel_[i] * kDt;
      if (std::abs(pos_[i]) > kArena) {
        pos_[i] = std::clamp(pos_[i], -kArena, kArena);
        vel_[i] = 0.0;
      }
    }
    terminated = false;
    return -(pos_ - goal_).norm();
  }

 private:
  Eigen::Vector2d pos_ = Eigen::Vector2d::Zero();
  Eigen::Vector2d vel_ = Eigen::Vector2d::Zero();
  Eigen::Vector2d goal_ = Eigen::Vector2d::Zero();
};

inline const std::vector<std::string>& registered_envs() {
  static const std::vector<std::string> names{"pendulum", "cartpole", "pointmass"};
  return names;
}

inline std::unique_ptr<Env> make_env(std::string_view name) {
  if (name == "pendulum") return std::make_unique<Pendulum>();
  if (name == "cartpole") return std::make_unique<CartPoleContinuous>();
  if (name == "pointmass") return std::make_unique<PointMass2D>();
  throw std::invalid_argument("unknown environment '" + std::string(name) + "'");
}

using EnvFactory = std::function<std::unique_ptr<Env>()>;

}  // namespace rpolab
