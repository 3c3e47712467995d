#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "rpolab/envs.hpp"

using namespace rpolab;

TEST(Spaces, Metadata) {
  auto check = [](std::string_view name, int obs, int act, double lo, double hi) {
    const Spaces s = make_env(name)->spaces();
    EXPECT_EQ(s.obs_dim, obs);
    EXPECT_EQ(s.action_dim, act);
    EXPECT_EQ(s.action_low, lo);
    EXPECT_EQ(s.action_high, hi);
  };
  check("pendulum", 3, 1, -2, 2);
  check("cartpole", 4, 1, -1, 1);
  check("pointmass", 6, 2, -1, 1);
  EXPECT_THROW(make_env("hopper"), std::invalid_argument);
}

TEST(Reset, PendulumInitialDistributionSupport) {
  Pendulum env;
  EnvRng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto o = env.reset(rng);
    const auto s = env.state();
    EXPECT_GE(s[0], -std::numbers::pi);
    EXPECT_LE(s[0], std::numbers::pi);
    EXPECT_GE(s[1], -1.0);
    EXPECT_LE(s[1], 1.0);
    EXPECT_DOUBLE_EQ(o[0], std::cos(s[0]));
    EXPECT_DOUBLE_EQ(o[1], std::sin(s[0]));
    EXPECT_EQ(o[2], s[1]);
    EXPECT_EQ(env.steps(), 0);
  }
}

TEST(Reset, CartPoleInitialDistributionSupport) {
  CartPoleContinuous env;
  EnvRng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto o = env.reset(rng);
    EXPECT_LE(o.cwiseAbs().maxCoeff(), 0.05);
  }
}

TEST(Reset, SameSeedSameObservation) {
  for (const auto& name : registered_envs()) {
    auto a = make_env(name), b = make_env(name);
    EnvRng ra(42), rb(42);
    EXPECT_EQ(a->reset(ra), b->reset(rb)) << name;
  }
}

TEST(Step, PendulumUprightIsFixedPoint) {
  Pendulum env;
  env.set_state(Eigen::Vector2d(0.0, 0.0));
  const auto r = env.step(Eigen::VectorXd::Zero(1));
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_EQ(env.state(), Eigen::Vector2d(0.0, 0.0));
}

TEST(Step, PendulumHangingCost) {
  Pendulum env;
  env.set_state(Eigen::Vector2d(std::numbers::pi, 0.0));
  EXPECT_NEAR(env.step(Eigen::VectorXd::Zero(1)).reward, -std::numbers::pi * std::numbers::pi, 1e-12);
  EXPECT_NEAR(-std::numbers::pi * std::numbers::pi, -9.8696, 1e-4);
}

TEST(Step, PendulumDynamicsOneStep) {
  Pendulum env;
  env.set_state(Eigen::Vector2d(0.5, 0.3));
  const auto r = env.step(Eigen::VectorXd::Constant(1, 5.0));  // clipped to 2
  const double u = 2.0;
  const double thdot = 0.3 + (15.0 * std::sin(0.5) + 3.0 * u) * 0.05;
  EXPECT_NEAR(env.state()[1], thdot, 1e-14);
  EXPECT_NEAR(env.state()[0], 0.5 + thdot * 0.05, 1e-14);
  EXPECT_NEAR(r.reward, -(0.25 + 0.1 * 0.09 + 0.001 * 4.0), 1e-14);
}

TEST(Step, PendulumAngleWrapsForCost) {
  Pendulum env;
  env.set_state(Eigen::Vector2d(2.0 * std::numbers::pi + 0.1, 0.0));
  EXPECT_NEAR(env.step(Eigen::VectorXd::Zero(1)).reward, -0.01, 1e-12);
}

TEST(Step, PendulumHorizonAndRewardBounds) {
  Pendulum env;
  EnvRng rng(3);
  std::uniform_real_distribution<double> a(-10, 10);
  env.reset(rng);
  const double worst = -(std::numbers::pi * std::numbers::pi + 0.1 * 64 + 0.001 * 4);
  int steps = 0;
  StepResult r;
  do {
    r = env.step(Eigen::VectorXd::Constant(1, a(rng)));
    ++steps;
    EXPECT_LE(r.reward, 0.0);
    EXPECT_GE(r.reward, worst);
    EXPECT_TRUE(r.observation.allFinite());
  } while (!r.done);
  EXPECT_EQ(steps, 200);
}

TEST(Step, CartPoleAtRestSurvivesFullHorizon) {
  CartPoleContinuous env;
  env.set_state(Eigen::Vector4d::Zero());
  double total = 0.0;
  for (int t = 0; t < 500; ++t) {
    ASSERT_FALSE(env.done()) << "terminated early at step " << t;
    const auto r = env.step(Eigen::VectorXd::Zero(1));
    EXPECT_EQ(r.reward, 1.0);
    total += r.reward;
    EXPECT_EQ(r.done, t == 499);
  }
  EXPECT_EQ(total, 500.0);
}

TEST(Step, CartPoleTerminatesWhenPoleFalls) {
  CartPoleContinuous env;
  EnvRng rng(4);
  env.reset(rng);
  int steps = 0;
  StepResult r;
  do {
    r = env.step(Eigen::VectorXd::Constant(1, 1.0));
    EXPECT_EQ(r.reward, 1.0);
    ++steps;
  } while (!r.done);
  EXPECT_LT(steps, 500);
  const auto s = env.state();
  EXPECT_TRUE(std::abs(s[0]) > 2.4 || std::abs(s[2]) > 12.0 * std::numbers::pi / 180.0);
}

TEST(Step, AfterTerminalIsUsageError) {
  for (const auto& name : registered_envs()) {
    auto env = make_env(name);
    EnvRng rng(5);
    env->reset(rng);
    const Eigen::VectorXd a = Eigen::VectorXd::Zero(env->spaces().action_dim);
    while (!env->step(a).done) {
    }
    EXPECT_THROW(env->step(a), UsageError) << name;
    env->reset(rng);
    EXPECT_NO_THROW(env->step(a));
  }
}

TEST(Step, WrongActionDimensionIsUsageError) {
  PointMass2D env;
  EnvRng rng(6);
  env.reset(rng);
  EXPECT_THROW(env.step(Eigen::VectorXd::Zero(1)), UsageError);
}

TEST(Step, PointMassRewardsWithinArenaBound) {
  PointMass2D env;
  EnvRng rng(7);
  std::uniform_real_distribution<double> a(-5, 5);
  env.reset(rng);
  for (int ep = 0; ep < 20; ++ep) {
    StepResult r;
    int steps = 0;
    do {
      r = env.step(Eigen::Vector2d(a(rng), a(rng)));
      ++steps;
      EXPECT_LE(r.reward, 0.0);
      EXPECT_GE(r.reward, -PointMass2D::kMaxDistance);
      EXPECT_LE(r.observation.head<2>().cwiseAbs().maxCoeff(), PointMass2D::kArena);
    } while (!r.done);
    EXPECT_EQ(steps, 100);
    env.reset(rng);
  }
}

TEST(Determinism, SeedAndActionsFixTrajectory) {
  for (const auto& name : registered_envs()) {
    auto run = [&] {
      auto env = make_env(name);
      EnvRng rng(8), act(9);
      std::normal_distribution<double> n(0.0, 3.0);
      std::vector<double> trace;
      env->reset(rng);
      for (int t = 0; t < env->horizon(); ++t) {
        Eigen::VectorXd a(env->spaces().action_dim);
        for (auto& x : a) x = n(act);
        const auto r = env->step(a);
        trace.push_back(r.reward);
        for (double o : r.observation) trace.push_back(o);
        if (r.done) break;
      }
      return trace;
    };
    EXPECT_EQ(run(), run()) << name;
  }
}

TEST(Observations, FiniteUnderExtremeActions) {
  for (const auto& name : registered_envs()) {
    auto env = make_env(name);
    EnvRng rng(10);
    env->reset(rng);
    std::uniform_real_distribution<double> a(-1e6, 1e6);
    for (int t = 0; t < env->horizon(); ++t) {
      Eigen::VectorXd act(env->spaces().action_dim);
      for (auto& x : act) x = a(rng);
      const auto r = env->step(act);
      EXPECT_TRUE(r.observation.allFinite());
      EXPECT_TRUE(std::isfinite(r.reward));
      if (r.done) break;
    }
  }
}
