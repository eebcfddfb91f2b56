/*
 Copyright 2026 The Stagewise Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/


#include "fixtures.hpp"
#include "oracles.hpp"

#include "stagewise/objective.hpp"

#include <gtest/gtest.h>

using namespace stagewise;

namespace
{

  /// Same instance with every derivative callback removed.
  StagewiseProblem strip_derivatives(StagewiseProblem p)
  {
    for (auto &s : p.stages)
    {
      s.dynamics_jacobian = nullptr;
      s.dynamics_hessian = nullptr;
      s.cost_derivatives = nullptr;
      s.measurement.jacobian = nullptr;
      s.measurement.hessian = nullptr;
    }
    p.terminal.cost_derivatives = nullptr;
    p.terminal.measurement.jacobian = nullptr;
    p.terminal.measurement.hessian = nullptr;
    return p;
  }

} // namespace

class ObjectiveSeeds : public ::testing::TestWithParam<int>
{
};

TEST_P(ObjectiveSeeds, ValueMatchesDefinition)
{
  const int seed = GetParam();
  const double mu = seed % 2 ? 0.3 : -0.5;
  const auto p = models::random_smooth_problem(fixtures::options(seed, 6, seed % 7, mu));
  const Iterate it = models::random_iterate(p, seed, 0.1);
  EXPECT_NEAR(eval_J(p, it), oracle::objective(p, it), 1e-10 * (1 + std::abs(oracle::objective(p, it))));
}

TEST_P(ObjectiveSeeds, GradientMatchesCentralDifferences)
{
  const int seed = GetParam();
  const double mu = seed % 2 ? 0.3 : -0.5;
  const auto p = models::random_smooth_problem(fixtures::options(seed, 6, seed % 7, mu));
  const Iterate it = models::random_iterate(p, seed, 0.1);
  const Vector g = oracle::stacked(Iterate{grad_J(p, it).x, grad_J(p, it).u});
  const Vector g_fd = oracle::gradient(
      [&](const Vector &z) { return oracle::objective(p, oracle::unstacked(p, z)); }, oracle::stacked(it));
  EXPECT_LT(fixtures::rel_err(g, g_fd), 1e-5);
}

INSTANTIATE_TEST_SUITE_P(Random, ObjectiveSeeds, ::testing::Range(0, 12));

TEST(Objective, EdgeSplitTimes)
{
  for (int t : {0, 5})
  {
    const auto p = models::random_smooth_problem(fixtures::options(21, 5, t, 0.4));
    const Iterate it = models::random_iterate(p, 21, 0.1);
    const Vector g = oracle::stacked(Iterate{grad_J(p, it).x, grad_J(p, it).u});
    const Vector g_fd = oracle::gradient(
        [&](const Vector &z) { return oracle::objective(p, oracle::unstacked(p, z)); }, oracle::stacked(it));
    EXPECT_LT(fixtures::rel_err(g, g_fd), 1e-5) << "t = " << t;
  }
}

TEST(Objective, MeritIsHalfSquaredGradient)
{
  const auto p = models::random_smooth_problem(fixtures::options(4, 5, 2, 0.3));
  const Iterate it = models::random_iterate(p, 4, 0.1);
  const auto g = grad_J(p, it);
  EXPECT_DOUBLE_EQ(merit(p, it), 0.5 * g.squared_norm());
}

TEST(Objective, DisturbancePenaltySignFollowsMu)
{
  // Moving x_0 away from the prior mean lowers J for mu > 0 and raises it for mu < 0.
  for (double mu : {0.5, -0.5})
  {
    auto p = models::random_smooth_problem(fixtures::options(8, 4, 2, mu, 3, 2, 2, 0.0));
    for (auto &s : p.stages)
      s.cost = [](const Vector &, const Vector &) { return 0.0; };
    p.terminal.cost = [](const Vector &) { return 0.0; };
    Iterate it = rollout_iterate(p, Vector::Zero(2));
    for (int j = 1; j <= 2; ++j)
      p.measurements[static_cast<size_t>(j - 1)] = p.measurement_model(j).h(it.states[static_cast<size_t>(j)]);
    EXPECT_NEAR(eval_J(p, it), 0.0, 1e-14);
    it.states[0](0) += 0.1;
    EXPECT_EQ(eval_J(p, it) < 0.0, mu > 0.0) << "mu = " << mu;
  }
}

TEST(Objective, UndefinedAtZeroMu)
{
  const auto p = models::random_smooth_problem(fixtures::options(1, 4, 2, 0.0));
  const Iterate it = models::random_iterate(p, 1);
  EXPECT_THROW(eval_J(p, it), std::domain_error);
  EXPECT_THROW(grad_J(p, it), std::domain_error);
}

TEST(Objective, FiniteDifferenceFallbackAgreesWithAnalyticDerivatives)
{
  const auto p = models::random_smooth_problem(fixtures::options(6, 5, 3, 0.3));
  const auto q = strip_derivatives(p);
  const Iterate it = models::random_iterate(p, 6, 0.1);
  const auto ga = grad_J(p, it), gf = grad_J(q, it);
  EXPECT_LT(fixtures::rel_err(oracle::stacked(Iterate{gf.x, gf.u}), oracle::stacked(Iterate{ga.x, ga.u})), 1e-8);

  const Residuals r = compute_residuals(p, it);
  const auto ha = augmented_hessians(p, it, r, false);
  const auto hf = augmented_hessians(q, it, r, false);
  for (int k = 0; k <= p.horizon; ++k)
    EXPECT_LT((ha.lbar_xx(k) - hf.lbar_xx(k)).norm(), 1e-5) << "k = " << k;
}

TEST(AugmentedHessians, GaussNewtonDropsModelCurvature)
{
  const auto p = models::random_smooth_problem(fixtures::options(2, 5, 3, 0.3));
  const Iterate it = models::random_iterate(p, 2, 0.1);
  const Residuals r = compute_residuals(p, it);
  const auto gn = augmented_hessians(p, it, r, true);
  const auto full = augmented_hessians(p, it, r, false);
  const TrajectoryExpansion e = expand(p, it, false);
  for (int k = 0; k < p.horizon; ++k)
  {
    EXPECT_EQ(gn.lbar_xx(k), e.stages[static_cast<size_t>(k)].l.lxx);
    EXPECT_GT((full.lbar_xx(k) - gn.lbar_xx(k)).norm(), 0.0);
  }
  EXPECT_THROW(augmented_hessians(p, r, e, factor_weights(p), false), ConfigError);
}

TEST(AugmentedHessians, ScaledFormIsFiniteAtZeroMu)
{
  auto p = models::random_smooth_problem(fixtures::options(3, 5, 3, 0.0));
  const Iterate it = models::random_iterate(p, 3, 0.1);
  const auto a = augmented_hessians(p, it, compute_residuals(p, it), false);
  for (int k = 0; k < p.horizon; ++k)
  {
    EXPECT_TRUE(a.scaled_xx(k).allFinite());
    EXPECT_EQ(a.lbar_xx(k), a.cost_xx[static_cast<size_t>(k)]);
  }
}
