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

#include "stagewise/core.hpp"
#include "stagewise/finite_difference.hpp"

#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace stagewise
{

  struct DynamicsJacobian
  {
    Matrix fx; // n_x x n_x
    Matrix fu; // n_x x n_u
  };

  struct DynamicsHessian
  {
    Tensor3 fxx; // n_x slices of n_x x n_x
    Tensor3 fxu; // n_x slices of n_x x n_u
    Tensor3 fuu; // n_x slices of n_u x n_u
  };

  struct CostDerivatives
  {
    Vector lx, lu;
    Matrix lxx, lxu, luu;
  };

  struct TerminalCostDerivatives
  {
    Vector lx;
    Matrix lxx;
  };

  /// Measurement map y = h(x) at one time index. Derivative callbacks are
  /// optional; empty ones are replaced by central differences.
  struct MeasurementModel
  {
    Index ny = 0;
    std::function<Vector(const Vector &)> h;
    std::function<Matrix(const Vector &)> jacobian;
    std::function<Tensor3(const Vector &)> hessian;
  };

  /// Transition, running cost and measurement for one time step.
  ///
  /// All callbacks must be pure and reentrant: problems are shared between
  /// threads during closed-loop simulation. Only `dynamics` and `cost` are
  /// mandatory; any missing derivative falls back to finite differences.
  struct StageModel
  {
    Index nx = 0;
    Index nu = 0;

    std::function<Vector(const Vector &, const Vector &)> dynamics;
    std::function<DynamicsJacobian(const Vector &, const Vector &)> dynamics_jacobian;
    std::function<DynamicsHessian(const Vector &, const Vector &)> dynamics_hessian;

    std::function<double(const Vector &, const Vector &)> cost;
    std::function<CostDerivatives(const Vector &, const Vector &)> cost_derivatives;

    /// Measurement taken at this stage's time index (unused at k = 0).
    MeasurementModel measurement;
  };

  struct TerminalModel
  {
    Index nx = 0;
    std::function<double(const Vector &)> cost;
    std::function<TerminalCostDerivatives(const Vector &)> cost_derivatives;
    /// Measurement at the final time, only used when current_time == horizon.
    MeasurementModel measurement;
  };

  /// Dynamic game with imperfect observation over a fixed horizon.
  ///
  /// Weight matrices and measurements use 1-based time indices through the
  /// accessors below: process_weight(j) is Q_j for 1 <= j <= T and
  /// measurement(j) is y_j for 1 <= j <= t.
  struct StagewiseProblem
  {
    int horizon = 0;      // T
    int current_time = 0; // t: number of measurements and applied controls
    double sensitivity = 0.0;

    Vector prior_mean;
    Matrix prior_weight;

    std::vector<Matrix> process_weights;     // Q_1 .. Q_T
    std::vector<Matrix> measurement_weights; // R_1 .. R_t
    std::vector<Vector> measurements;        // y_1 .. y_t
    std::vector<Vector> past_controls;       // u_0 .. u_{t-1}

    std::vector<StageModel> stages; // 0 .. T-1
    TerminalModel terminal;

    Index state_dim() const { return prior_mean.size(); }
    Index control_dim() const { return stages.empty() ? 0 : stages.front().nu; }

    const Matrix &process_weight(int j) const { return process_weights.at(static_cast<size_t>(j - 1)); }
    const Matrix &measurement_weight(int j) const { return measurement_weights.at(static_cast<size_t>(j - 1)); }
    const Vector &measurement(int j) const { return measurements.at(static_cast<size_t>(j - 1)); }

    /// Measurement model for time index j in [1, T].
    const MeasurementModel &measurement_model(int j) const
    {
      return j == horizon ? terminal.measurement : stages.at(static_cast<size_t>(j)).measurement;
    }
  };

  /// Nominal trajectory: every state and the free controls u_t .. u_{T-1}.
  /// States need not satisfy the dynamics; the gap is the disturbance.
  struct Iterate
  {
    std::vector<Vector> states;   // x_0 .. x_T
    std::vector<Vector> controls; // u_t .. u_{T-1}, stored at index k - t
  };

  struct Residuals
  {
    std::vector<Vector> process;     // w_0 .. w_T
    std::vector<Vector> measurement; // gamma_1 .. gamma_t, stored at index j - 1

    const Vector &gamma(int j) const { return measurement.at(static_cast<size_t>(j - 1)); }
  };

  /// Control applied at step k: fixed data for k < t, decision variable after.
  inline const Vector &applied_control(const StagewiseProblem &problem, const Iterate &iterate, int k)
  {
    if (k < problem.current_time)
      return problem.past_controls.at(static_cast<size_t>(k));
    return iterate.controls.at(static_cast<size_t>(k - problem.current_time));
  }

  // ---------------------------------------------------------------------------
  // Derivative evaluation with finite-difference fallback

  inline DynamicsJacobian dynamics_jacobian(const StageModel &stage, const Vector &x, const Vector &u)
  {
    if (stage.dynamics_jacobian)
      return stage.dynamics_jacobian(x, u);
    DynamicsJacobian jac;
    jac.fx = fd::jacobian([&](const Vector &z) { return stage.dynamics(z, u); }, x);
    jac.fu = fd::jacobian([&](const Vector &z) { return stage.dynamics(x, z); }, u);
    return jac;
  }

  inline DynamicsHessian dynamics_hessian(const StageModel &stage, const Vector &x, const Vector &u)
  {
    if (stage.dynamics_hessian)
      return stage.dynamics_hessian(x, u);
    const Index nx = x.size();
    const Index nu = u.size();
    const double relative = stage.dynamics_jacobian ? fd::kStep : fd::kNestedStep;
    Vector xu(nx + nu);
    xu << x, u;
    // Differentiate the stacked Jacobian [f_x f_u] with respect to (x, u).
    const Tensor3 full = fd::tensor_from_jacobian(
        [&](const Vector &z) {
          const DynamicsJacobian jac = dynamics_jacobian(stage, z.head(nx), z.tail(nu));
          Matrix stacked(jac.fx.rows(), nx + nu);
          stacked << jac.fx, jac.fu;
          return stacked;
        },
        xu, relative);
    DynamicsHessian hess;
    for (const auto &slice : full)
    {
      hess.fxx.push_back(slice.topLeftCorner(nx, nx));
      hess.fxu.push_back(slice.topRightCorner(nx, nu));
      hess.fuu.push_back(slice.bottomRightCorner(nu, nu));
    }
    return hess;
  }

  inline Matrix measurement_jacobian(const MeasurementModel &model, const Vector &x)
  {
    if (model.jacobian)
      return model.jacobian(x);
    return fd::jacobian(model.h, x);
  }

  inline Tensor3 measurement_hessian(const MeasurementModel &model, const Vector &x)
  {
    if (model.hessian)
      return model.hessian(x);
    const double relative = model.jacobian ? fd::kStep : fd::kNestedStep;
    return fd::tensor_from_jacobian([&](const Vector &z) { return measurement_jacobian(model, z); }, x,
                                    relative);
  }

  inline CostDerivatives cost_derivatives(const StageModel &stage, const Vector &x, const Vector &u)
  {
    if (stage.cost_derivatives)
      return stage.cost_derivatives(x, u);
    const Index nx = x.size();
    const Index nu = u.size();
    Vector xu(nx + nu);
    xu << x, u;
    auto cost = [&](const Vector &z) { return stage.cost(z.head(nx), z.tail(nu)); };
    const Vector grad = fd::gradient(cost, xu);
    const Matrix hess = fd::hessian_from_gradient([&](const Vector &z) { return fd::gradient(cost, z); }, xu,
                                                  fd::kNestedStep);
    CostDerivatives d;
    d.lx = grad.head(nx);
    d.lu = grad.tail(nu);
    d.lxx = hess.topLeftCorner(nx, nx);
    d.lxu = hess.topRightCorner(nx, nu);
    d.luu = hess.bottomRightCorner(nu, nu);
    return d;
  }

  inline TerminalCostDerivatives terminal_cost_derivatives(const TerminalModel &terminal, const Vector &x)
  {
    if (terminal.cost_derivatives)
      return terminal.cost_derivatives(x);
    TerminalCostDerivatives d;
    d.lx = fd::gradient(terminal.cost, x);
    d.lxx = fd::hessian_from_gradient([&](const Vector &z) { return fd::gradient(terminal.cost, z); }, x,
                                      fd::kNestedStep);
    return d;
  }

  // ---------------------------------------------------------------------------
  // Validation

  /// Findings of validate(); the problem is valid iff there are none.
  struct ValidationReport
  {
    std::vector<std::string> findings;

    bool ok() const { return findings.empty(); }
    std::string summary() const
    {
      std::ostringstream out;
      for (size_t i = 0; i < findings.size(); ++i)
        out << (i ? "; " : "") << findings[i];
      return out.str();
    }
  };

  namespace detail
  {
    inline void check_shape(ValidationReport &report, const std::string &name, const Matrix &m, Index rows,
                            Index cols)
    {
      if (m.rows() != rows || m.cols() != cols)
      {
        std::ostringstream out;
        out << name << " has shape " << m.rows() << "x" << m.cols() << ", expected " << rows << "x" << cols;
        report.findings.push_back(out.str());
      }
    }

    inline void check_spd(ValidationReport &report, const std::string &name, const Matrix &m, Index n)
    {
      if (m.rows() != n || m.cols() != n)
      {
        check_shape(report, name, m, n, n);
        return;
      }
      if (!is_positive_definite(m))
        report.findings.push_back(name + " not positive-definite");
    }

    inline void check_measurement_model(ValidationReport &report, const std::string &name,
                                        const MeasurementModel &model, const Vector &x)
    {
      if (!model.h)
      {
        report.findings.push_back(name + " has no measurement function");
        return;
      }
      const Vector y = model.h(x);
      if (y.size() != model.ny)
        report.findings.push_back(name + " returns " + std::to_string(y.size()) + " outputs, declared " +
                                  std::to_string(model.ny));
      if (model.jacobian)
        check_shape(report, name + ".jacobian", model.jacobian(x), model.ny, x.size());
    }
  } // namespace detail

  /// Checks dimensions, horizon bounds, and positive-definiteness of P, Q_j
  /// and R_j. Model callbacks are probed once at the prior mean.
  inline ValidationReport validate(const StagewiseProblem &problem)
  {
    ValidationReport report;
    const int T = problem.horizon;
    const int t = problem.current_time;
    const Index nx = problem.state_dim();

    if (T < 1)
      report.findings.push_back("horizon T=" + std::to_string(T) + " must be >= 1");
    if (t < 0 || t > T)
      report.findings.push_back("split time t=" + std::to_string(t) + " outside [0, T=" + std::to_string(T) + "]");
    if (nx == 0)
      report.findings.push_back("prior mean is empty");
    if (!std::isfinite(problem.sensitivity))
      report.findings.push_back("sensitivity mu is not finite");
    if (!report.ok())
      return report;

    detail::check_spd(report, "P", problem.prior_weight, nx);

    if (static_cast<int>(problem.process_weights.size()) != T)
      report.findings.push_back("expected " + std::to_string(T) + " process weights Q, got " +
                                std::to_string(problem.process_weights.size()));
    for (size_t j = 0; j < problem.process_weights.size(); ++j)
      detail::check_spd(report, "Q[" + std::to_string(j + 1) + "]", problem.process_weights[j], nx);

    if (static_cast<int>(problem.measurements.size()) != t)
      report.findings.push_back("expected " + std::to_string(t) + " measurements, got " +
                                std::to_string(problem.measurements.size()));
    if (static_cast<int>(problem.past_controls.size()) != t)
      report.findings.push_back("expected " + std::to_string(t) + " past controls, got " +
                                std::to_string(problem.past_controls.size()));
    if (static_cast<int>(problem.measurement_weights.size()) != t)
      report.findings.push_back("expected " + std::to_string(t) + " measurement weights R, got " +
                                std::to_string(problem.measurement_weights.size()));

    if (static_cast<int>(problem.stages.size()) != T)
    {
      report.findings.push_back("expected " + std::to_string(T) + " stage models, got " +
                                std::to_string(problem.stages.size()));
      return report;
    }

    const Index nu = problem.control_dim();
    for (int k = 0; k < T; ++k)
    {
      const StageModel &stage = problem.stages[static_cast<size_t>(k)];
      const std::string name = "stage[" + std::to_string(k) + "]";
      if (stage.nx != nx || stage.nu != nu)
      {
        report.findings.push_back(name + " declares n_x=" + std::to_string(stage.nx) + ", n_u=" +
                                  std::to_string(stage.nu) + "; expected " + std::to_string(nx) + ", " +
                                  std::to_string(nu));
        continue;
      }
      if (!stage.dynamics || !stage.cost)
      {
        report.findings.push_back(name + " is missing dynamics or cost");
        continue;
      }
      const Vector u = Vector::Zero(nu);
      const Vector next = stage.dynamics(problem.prior_mean, u);
      if (next.size() != nx)
        report.findings.push_back(name + " dynamics returns " + std::to_string(next.size()) + " states");
      if (stage.dynamics_jacobian)
      {
        const DynamicsJacobian jac = stage.dynamics_jacobian(problem.prior_mean, u);
        detail::check_shape(report, name + ".f_x", jac.fx, nx, nx);
        detail::check_shape(report, name + ".f_u", jac.fu, nx, nu);
      }
      if (stage.cost_derivatives)
      {
        const CostDerivatives d = stage.cost_derivatives(problem.prior_mean, u);
        detail::check_shape(report, name + ".l_x", d.lx, nx, 1);
        detail::check_shape(report, name + ".l_u", d.lu, nu, 1);
        detail::check_shape(report, name + ".l_xx", d.lxx, nx, nx);
        detail::check_shape(report, name + ".l_xu", d.lxu, nx, nu);
        detail::check_shape(report, name + ".l_uu", d.luu, nu, nu);
      }
    }
    if (!problem.terminal.cost)
      report.findings.push_back("terminal cost is missing");

    for (int j = 1; j <= t; ++j)
    {
      const MeasurementModel &model = problem.measurement_model(j);
      detail::check_measurement_model(report, "h[" + std::to_string(j) + "]", model, problem.prior_mean);
      if (j - 1 < static_cast<int>(problem.measurements.size()) &&
          problem.measurement(j).size() != model.ny)
        report.findings.push_back("y[" + std::to_string(j) + "] has size " +
                                  std::to_string(problem.measurement(j).size()) + ", expected " +
                                  std::to_string(model.ny));
      if (j - 1 < static_cast<int>(problem.measurement_weights.size()))
        detail::check_spd(report, "R[" + std::to_string(j) + "]", problem.measurement_weight(j), model.ny);
      if (j - 1 < static_cast<int>(problem.past_controls.size()) &&
          problem.past_controls[static_cast<size_t>(j - 1)].size() != nu)
        report.findings.push_back("u_past[" + std::to_string(j - 1) + "] has wrong size");
    }
    return report;
  }

  inline void require_valid(const StagewiseProblem &problem)
  {
    const ValidationReport report = validate(problem);
    if (!report.ok())
      throw ConfigError("invalid problem: " + report.summary());
  }

  inline void check_iterate(const StagewiseProblem &problem, const Iterate &iterate)
  {
    const auto n_states = static_cast<size_t>(problem.horizon + 1);
    const auto n_controls = static_cast<size_t>(problem.horizon - problem.current_time);
    if (iterate.states.size() != n_states || iterate.controls.size() != n_controls)
      throw std::invalid_argument("iterate has " + std::to_string(iterate.states.size()) + " states and " +
                                  std::to_string(iterate.controls.size()) + " controls; expected " +
                                  std::to_string(n_states) + " and " + std::to_string(n_controls));
  }

  // ---------------------------------------------------------------------------
  // Residuals and rollouts

  inline Residuals compute_residuals(const StagewiseProblem &problem, const Iterate &iterate)
  {
    check_iterate(problem, iterate);
    const int T = problem.horizon;
    const int t = problem.current_time;
    Residuals r;
    r.process.reserve(static_cast<size_t>(T + 1));
    r.process.push_back(iterate.states[0] - problem.prior_mean);
    for (int k = 0; k < T; ++k)
    {
      const auto &stage = problem.stages[static_cast<size_t>(k)];
      r.process.push_back(iterate.states[static_cast<size_t>(k + 1)] -
                          stage.dynamics(iterate.states[static_cast<size_t>(k)],
                                         applied_control(problem, iterate, k)));
    }
    r.measurement.reserve(static_cast<size_t>(t));
    for (int j = 1; j <= t; ++j)
      r.measurement.push_back(problem.measurement(j) -
                              problem.measurement_model(j).h(iterate.states[static_cast<size_t>(j)]));
    return r;
  }

  /// Zero-disturbance simulation x_{k+1} = f_k(x_k, u_k) from x0 for as many
  /// steps as controls are given. Returns controls.size() + 1 states.
  inline std::vector<Vector> rollout(const StagewiseProblem &problem, const Vector &x0,
                                     const std::vector<Vector> &controls)
  {
    if (static_cast<int>(controls.size()) > problem.horizon)
      throw std::invalid_argument("rollout: " + std::to_string(controls.size()) +
                                  " controls exceed horizon " + std::to_string(problem.horizon));
    std::vector<Vector> states;
    states.reserve(controls.size() + 1);
    states.push_back(x0);
    for (size_t k = 0; k < controls.size(); ++k)
    {
      Vector next = problem.stages[k].dynamics(states.back(), controls[k]);
      if (!next.allFinite())
        throw DivergenceError(static_cast<int>(k + 1), "rollout produced a non-finite state");
      states.push_back(std::move(next));
    }
    return states;
  }

  /// Iterate obtained by rolling out from the prior mean with the past
  /// controls followed by the given future controls (T - t of them).
  inline Iterate rollout_iterate(const StagewiseProblem &problem, const std::vector<Vector> &future_controls)
  {
    if (static_cast<int>(future_controls.size()) != problem.horizon - problem.current_time)
      throw std::invalid_argument("rollout_iterate: expected T - t future controls");
    std::vector<Vector> controls = problem.past_controls;
    controls.insert(controls.end(), future_controls.begin(), future_controls.end());
    Iterate it;
    it.states = rollout(problem, problem.prior_mean, controls);
    it.controls = future_controls;
    return it;
  }

  /// Same, with one control held constant over the future.
  inline Iterate rollout_iterate(const StagewiseProblem &problem, const Vector &future_control)
  {
    return rollout_iterate(problem, std::vector<Vector>(static_cast<size_t>(problem.horizon - problem.current_time),
                                                        future_control));
  }

} // namespace stagewise
