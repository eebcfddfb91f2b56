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

#include "stagewise/dense_oracle.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace stagewise;

namespace
{

  /// 0.5 [w_0'P^-1 w_0 + sum_{j<=t} (w_j'Q_j^-1 w_j + gamma_j'R_j^-1 gamma_j)] over x_0 .. x_t.
  double map_objective(const StagewiseProblem &p, const Vector &z)
  {
    const Index nx = p.state_dim();
    auto x = [&](int k) { return Vector(z.segment(k * nx, nx)); };
    auto quad = [](const Matrix &W, const Vector &r) { return r.dot(W.ldlt().solve(r)); };
    double s = quad(p.prior_weight, x(0) - p.prior_mean);
    for (int j = 1; j <= p.current_time; ++j)
    {
      const auto js = static_cast<size_t>(j);
      s += quad(p.process_weights[js - 1], x(j) - p.stages[js - 1].dynamics(x(j - 1), p.past_controls[js - 1]));
      s += quad(p.measurement_weights[js - 1], p.measurements[js - 1] - p.measurement_model(j).h(x(j)));
    }
    return 0.5 * s;
  }

} // namespace

TEST(SymmetricSolve, MatchesPivotedLU)
{
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  Matrix A(7, 7);
  for (Index i = 0; i < 7; ++i)
    for (Index j = 0; j < 7; ++j)
      A(i, j) = n(rng);
  A = A + A.transpose().eval();
  Vector b(7);
  for (Index i = 0; i < 7; ++i)
    b(i) = n(rng);
  const Vector x = dense::solve_symmetric_indefinite(A, b);
  EXPECT_LT((x - A.fullPivLu().solve(b)).norm(), 1e-10 * x.norm());
}

TEST(SymmetricSolve, ReportsSingularMatrix)
{
  Matrix A = Matrix::Zero(3, 3);
  A(0, 0) = 1.0;
  EXPECT_THROW(dense::solve_symmetric_indefinite(A, Vector::Ones(3)), dense::SingularSystem);
}

TEST(Assemble, HessianAndGradientMatchDifferencesOfObjective)
{
  for (int seed : {0, 3, 7})
  {
    const auto p = models::random_smooth_problem(fixtures::options(seed, 4, seed % 5, 0.3, 2, 2, 2));
    const Iterate it = models::random_iterate(p, seed, 0.1);
    const auto sys = dense::assemble(p, it, false);
    const Vector z = oracle::stacked(it);
    auto J = [&](const Vector &v) { return oracle::objective(p, oracle::unstacked(p, v)); };
    EXPECT_LT(fixtures::rel_err(sys.g, oracle::gradient(J, z)), 1e-6) << "seed " << seed;
    EXPECT_LT((sys.H - oracle::hessian(J, z)).cwiseAbs().maxCoeff(), 1e-4) << "seed " << seed;
    EXPECT_LT((sys.H - sys.H.transpose()).norm(), 1e-12 * sys.H.norm());
  }
}

TEST(Assemble, NeutralSystemIsTheMapHessian)
{
  const auto p = models::random_smooth_problem(fixtures::options(2, 5, 3, 0.0));
  const Iterate it = models::random_iterate(p, 2, 0.1);
  const auto sys = dense::assemble(p, it, false);
  const Index n = (p.current_time + 1) * p.state_dim();
  ASSERT_EQ(sys.H.rows(), n);
  Vector z(n);
  for (int k = 0; k <= p.current_time; ++k)
    z.segment(k * p.state_dim(), p.state_dim()) = it.states[static_cast<size_t>(k)];
  auto f = [&](const Vector &v) { return map_objective(p, v); };
  EXPECT_LT(fixtures::rel_err(sys.g, oracle::gradient(f, z)), 1e-6);
  EXPECT_LT((sys.H - oracle::hessian(f, z)).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Assemble, LayoutOffsets)
{
  const auto p = models::random_smooth_problem(fixtures::options(1, 6, 2, 0.3, 3, 2, 2));
  const auto sys = dense::assemble(p, models::random_iterate(p, 1), false);
  EXPECT_EQ(sys.size(), 7 * 3 + 4 * 2);
  EXPECT_EQ(sys.x_offset(2), 6);
  EXPECT_EQ(sys.u_offset(2), 21);
  EXPECT_EQ(sys.u_offset(5), 27);
}

TEST(SolveDense, ResidualIsSmall)
{
  const auto p = models::random_smooth_problem(fixtures::options(4, 6, 3, -0.5));
  const auto sol = dense::solve_dense(dense::assemble(p, models::random_iterate(p, 4), false));
  EXPECT_LT(sol.relative_residual, 1e-12);
  EXPECT_EQ(sol.step.p_x.size(), 7u);
  EXPECT_EQ(sol.step.p_u.size(), 3u);
}
