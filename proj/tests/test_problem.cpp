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

#include <gtest/gtest.h>

using namespace stagewise;

namespace
{

  StagewiseProblem small_problem(int T = 4, int t = 2)
  {
    return models::random_smooth_problem(fixtures::options(3, T, t, 0.3));
  }

  bool mentions(const ValidationReport &r, const std::string &needle)
  {
    return r.summary().find(needle) != std::string::npos;
  }

} // namespace

TEST(Validate, AcceptsGeneratedInstance)
{
  const auto report = validate(small_problem());
  EXPECT_TRUE(report.ok()) << report.summary();
}

TEST(Validate, RejectsSplitTimeOutsideHorizon)
{
  auto p = small_problem();
  p.current_time = 5;
  EXPECT_TRUE(mentions(validate(p), "split time"));
}

TEST(Validate, NamesMisshapenWeight)
{
  auto p = small_problem();
  p.process_weights[1] = Matrix::Identity(2, 2);
  const auto report = validate(p);
  EXPECT_TRUE(mentions(report, "Q[2] has shape 2x2, expected 3x3")) << report.summary();
}

TEST(Validate, RejectsIndefiniteWeights)
{
  auto p = small_problem();
  p.prior_weight(0, 0) = -1.0;
  p.measurement_weights[0] = -Matrix::Identity(2, 2);
  const auto report = validate(p);
  EXPECT_TRUE(mentions(report, "P not positive-definite"));
  EXPECT_TRUE(mentions(report, "R[1] not positive-definite"));
  EXPECT_THROW(require_valid(p), ConfigError);
}

TEST(Validate, CountsMeasurementsAgainstSplitTime)
{
  auto p = small_problem();
  p.measurements.pop_back();
  EXPECT_TRUE(mentions(validate(p), "expected 2 measurements, got 1"));
}

TEST(Validate, ChecksDeclaredMeasurementSize)
{
  auto p = small_problem();
  for (auto &s : p.stages)
    s.measurement.ny = 5;
  p.terminal.measurement.ny = 5;
  EXPECT_TRUE(mentions(validate(p), "declared 5"));
}

TEST(Residuals, VanishOnRolloutWithMatchingMeasurements)
{
  auto p = small_problem(5, 3);
  const Iterate it = rollout_iterate(p, Vector::Zero(2));
  for (int j = 1; j <= 3; ++j)
    p.measurements[static_cast<size_t>(j - 1)] = p.measurement_model(j).h(it.states[static_cast<size_t>(j)]);
  const Residuals r = compute_residuals(p, it);
  ASSERT_EQ(r.process.size(), 6u);
  ASSERT_EQ(r.measurement.size(), 3u);
  for (const auto &w : r.process)
    EXPECT_LT(w.norm(), 1e-14);
  for (const auto &g : r.measurement)
    EXPECT_LT(g.norm(), 1e-14);
}

TEST(Residuals, PriorResidualIsOffsetFromMean)
{
  const auto p = small_problem();
  Iterate it = rollout_iterate(p, Vector::Zero(2));
  it.states[0] += Vector::Constant(3, 0.25);
  const Residuals r = compute_residuals(p, it);
  EXPECT_NEAR((r.process[0] - Vector::Constant(3, 0.25)).norm(), 0.0, 1e-15);
  EXPECT_GT(r.process[1].norm(), 0.0);
}

TEST(Residuals, RejectsMisshapenIterate)
{
  const auto p = small_problem();
  Iterate it = rollout_iterate(p, Vector::Zero(2));
  it.controls.pop_back();
  EXPECT_THROW(compute_residuals(p, it), std::invalid_argument);
}

TEST(Rollout, UsesPastThenFutureControls)
{
  const auto p = small_problem(4, 2);
  std::vector<Vector> future{Vector::Constant(2, 0.1), Vector::Constant(2, -0.2)};
  const Iterate it = rollout_iterate(p, future);
  ASSERT_EQ(it.states.size(), 5u);
  Vector x = p.prior_mean;
  x = p.stages[0].dynamics(x, p.past_controls[0]);
  x = p.stages[1].dynamics(x, p.past_controls[1]);
  x = p.stages[2].dynamics(x, future[0]);
  EXPECT_LT((it.states[3] - x).norm(), 1e-15);
  EXPECT_EQ(applied_control(p, it, 1), p.past_controls[1]);
  EXPECT_EQ(applied_control(p, it, 3), future[1]);
}

TEST(Rollout, ReportsDivergence)
{
  auto p = small_problem();
  p.stages[1].dynamics = [](const Vector &x, const Vector &) {
    return Vector(Vector::Constant(x.size(), std::numeric_limits<double>::infinity()));
  };
  try
  {
    rollout(p, p.prior_mean, std::vector<Vector>(4, Vector::Zero(2)));
    FAIL() << "expected DivergenceError";
  }
  catch (const DivergenceError &e)
  {
    EXPECT_EQ(e.index(), 2);
  }
}

TEST(Rollout, RejectsWrongControlCount)
{
  const auto p = small_problem(4, 2);
  EXPECT_THROW(rollout_iterate(p, std::vector<Vector>(3, Vector::Zero(2))), std::invalid_argument);
}
