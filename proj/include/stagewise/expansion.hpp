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

#pragma once

#include "stagewise/problem.hpp"

namespace stagewise
{

  /// Cholesky factors of every weight matrix, so inverses are only ever
  /// applied through solves.
  struct WeightFactors
  {
    Eigen::LLT<Matrix> prior;
    std::vector<Eigen::LLT<Matrix>> process;     // Q_1 .. Q_T at index j - 1
    std::vector<Eigen::LLT<Matrix>> measurement; // R_1 .. R_t at index j - 1

    const Eigen::LLT<Matrix> &Q(int j) const { return process.at(static_cast<size_t>(j - 1)); }
    const Eigen::LLT<Matrix> &R(int j) const { return measurement.at(static_cast<size_t>(j - 1)); }
  };

  inline WeightFactors factor_weights(const StagewiseProblem &problem)
  {
    auto factor = [](const Matrix &m, const std::string &name) {
      Eigen::LLT<Matrix> llt(m);
      if (llt.info() != Eigen::Success)
        throw ConfigError(name + " not positive-definite");
      return llt;
    };
    WeightFactors f;
    f.prior = factor(problem.prior_weight, "P");
    for (size_t j = 0; j < problem.process_weights.size(); ++j)
      f.process.push_back(factor(problem.process_weights[j], "Q[" + std::to_string(j + 1) + "]"));
    for (size_t j = 0; j < problem.measurement_weights.size(); ++j)
      f.measurement.push_back(factor(problem.measurement_weights[j], "R[" + std::to_string(j + 1) + "]"));
    return f;
  }

  struct StageExpansion
  {
    DynamicsJacobian f;
    DynamicsHessian f2; // empty unless second-order terms were requested
    CostDerivatives l;
  };

  /// Model derivatives along an iterate. Controls for k < t are the fixed
  /// past controls.
  struct TrajectoryExpansion
  {
    std::vector<StageExpansion> stages; // 0 .. T-1
    TerminalCostDerivatives terminal;
    std::vector<Matrix> h_x;   // measurement Jacobians at j = 1 .. t (index j - 1)
    std::vector<Tensor3> h_xx; // measurement tensors, empty unless second order
    bool second_order = false;

    const Matrix &hx(int j) const { return h_x.at(static_cast<size_t>(j - 1)); }
    const Tensor3 &hxx(int j) const { return h_xx.at(static_cast<size_t>(j - 1)); }
  };

  inline TrajectoryExpansion expand(const StagewiseProblem &problem, const Iterate &iterate, bool second_order)
  {
    check_iterate(problem, iterate);
    const int T = problem.horizon;
    const int t = problem.current_time;
    TrajectoryExpansion e;
    e.second_order = second_order;
    e.stages.resize(static_cast<size_t>(T));
    for (int k = 0; k < T; ++k)
    {
      const StageModel &stage = problem.stages[static_cast<size_t>(k)];
      const Vector &x = iterate.states[static_cast<size_t>(k)];
      const Vector &u = applied_control(problem, iterate, k);
      StageExpansion &s = e.stages[static_cast<size_t>(k)];
      s.f = dynamics_jacobian(stage, x, u);
      s.l = cost_derivatives(stage, x, u);
      if (second_order)
        s.f2 = dynamics_hessian(stage, x, u);
    }
    e.terminal = terminal_cost_derivatives(problem.terminal, iterate.states.back());
    for (int j = 1; j <= t; ++j)
    {
      const MeasurementModel &model = problem.measurement_model(j);
      const Vector &x = iterate.states[static_cast<size_t>(j)];
      e.h_x.push_back(measurement_jacobian(model, x));
      if (second_order)
        e.h_xx.push_back(measurement_hessian(model, x));
    }
    return e;
  }

} // namespace stagewise
