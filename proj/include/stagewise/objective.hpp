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

// The unconstrained saddle objective
//
//   J(x, u) = sum_k l_k(x_k, u_k) + l_T(x_T)
//             - 1/(2 mu) [ w_0' P^-1 w_0 + sum_{j<=t} g_j' R_j^-1 g_j + sum_{j>=1} w_j' Q_j^-1 w_j ]
//
// obtained by substituting the disturbances w, gamma with the states they
// generate, and the quantities derived from it.

#include "stagewise/expansion.hpp"

#include <stdexcept>

namespace stagewise
{

  struct GradientBlocks
  {
    std::vector<Vector> x; // dJ/dx_0 .. dJ/dx_T
    std::vector<Vector> u; // dJ/du_t .. dJ/du_{T-1}

    double squared_norm() const
    {
      double s = 0.0;
      for (const auto &g : x)
        s += g.squaredNorm();
      for (const auto &g : u)
        s += g.squaredNorm();
      return s;
    }
  };

  namespace detail
  {
    inline void require_nonzero_mu(const StagewiseProblem &problem, const char *what)
    {
      if (problem.sensitivity == 0.0)
        throw std::domain_error(std::string(what) +
                                " is undefined at mu = 0; use the decoupled solver path");
    }

    /// lambda_0 = P^-1 w_0, lambda_j = Q_j^-1 w_j.
    inline std::vector<Vector> weighted_process(const WeightFactors &weights, const Residuals &r)
    {
      std::vector<Vector> out;
      out.reserve(r.process.size());
      out.push_back(weights.prior.solve(r.process[0]));
      for (size_t j = 1; j < r.process.size(); ++j)
        out.push_back(weights.Q(static_cast<int>(j)).solve(r.process[j]));
      return out;
    }

    /// eta_j = R_j^-1 gamma_j at index j - 1.
    inline std::vector<Vector> weighted_measurement(const WeightFactors &weights, const Residuals &r)
    {
      std::vector<Vector> out;
      out.reserve(r.measurement.size());
      for (size_t j = 0; j < r.measurement.size(); ++j)
        out.push_back(weights.R(static_cast<int>(j + 1)).solve(r.measurement[j]));
      return out;
    }
  } // namespace detail

  /// Quadratic form of the residuals, w_0'P^-1 w_0 + sum gamma'R^-1 gamma + sum w'Q^-1 w.
  inline double residual_quadratic_form(const StagewiseProblem &problem, const Residuals &r)
  {
    const WeightFactors weights = factor_weights(problem);
    double s = r.process[0].dot(weights.prior.solve(r.process[0]));
    for (int j = 1; j <= problem.horizon; ++j)
      s += r.process[static_cast<size_t>(j)].dot(weights.Q(j).solve(r.process[static_cast<size_t>(j)]));
    for (int j = 1; j <= problem.current_time; ++j)
      s += r.gamma(j).dot(weights.R(j).solve(r.gamma(j)));
    return s;
  }

  /// Running plus terminal cost along the iterate (past controls for k < t).
  inline double trajectory_cost(const StagewiseProblem &problem, const Iterate &iterate)
  {
    double s = 0.0;
    for (int k = 0; k < problem.horizon; ++k)
      s += problem.stages[static_cast<size_t>(k)].cost(iterate.states[static_cast<size_t>(k)],
                                                      applied_control(problem, iterate, k));
    return s + problem.terminal.cost(iterate.states.back());
  }

  inline double eval_J(const StagewiseProblem &problem, const Iterate &iterate)
  {
    detail::require_nonzero_mu(problem, "J");
    const Residuals r = compute_residuals(problem, iterate);
    return trajectory_cost(problem, iterate) - residual_quadratic_form(problem, r) / (2.0 * problem.sensitivity);
  }

  /// Gradient blocks from a precomputed expansion (first-order terms only).
  inline GradientBlocks grad_J(const StagewiseProblem &problem, const Residuals &r, const TrajectoryExpansion &e,
                               const WeightFactors &weights)
  {
    detail::require_nonzero_mu(problem, "grad J");
    const int T = problem.horizon;
    const int t = problem.current_time;
    const double inv_mu = 1.0 / problem.sensitivity;
    const std::vector<Vector> lambda = detail::weighted_process(weights, r);
    const std::vector<Vector> eta = detail::weighted_measurement(weights, r);

    GradientBlocks g;
    g.x.resize(static_cast<size_t>(T + 1));
    for (int k = 0; k <= T; ++k)
    {
      const auto ks = static_cast<size_t>(k);
      Vector gx = (k < T ? e.stages[ks].l.lx : e.terminal.lx) - inv_mu * lambda[ks];
      if (k < T)
        gx.noalias() += inv_mu * (e.stages[ks].f.fx.transpose() * lambda[ks + 1]);
      if (k >= 1 && k <= t)
        gx.noalias() += inv_mu * (e.hx(k).transpose() * eta[ks - 1]);
      g.x[ks] = std::move(gx);
    }
    for (int k = t; k < T; ++k)
    {
      const auto ks = static_cast<size_t>(k);
      g.u.push_back(e.stages[ks].l.lu + inv_mu * (e.stages[ks].f.fu.transpose() * lambda[ks + 1]));
    }
    return g;
  }

  inline GradientBlocks grad_J(const StagewiseProblem &problem, const Iterate &iterate)
  {
    detail::require_nonzero_mu(problem, "grad J");
    const Residuals r = compute_residuals(problem, iterate);
    return grad_J(problem, r, expand(problem, iterate, false), factor_weights(problem));
  }

  /// Half the squared norm of the full gradient of J.
  inline double merit(const StagewiseProblem &problem, const Iterate &iterate)
  {
    return 0.5 * grad_J(problem, iterate).squared_norm();
  }

  /// Cost Hessians augmented with the residual-weighted second derivatives
  /// of the dynamics and measurement maps:
  ///
  ///   lbar_xx[k] = l_xx + (1/mu) (Q^-1 w_{k+1}) . f_xx + (1/mu) [1 <= k <= t] (R^-1 gamma_k) . h_xx
  ///
  /// The mu-free contractions are kept separately so the mu = 0 limit (and
  /// the mu-scaled form mu * lbar used by the estimation recursion) never
  /// divides by mu.
  struct AugmentedStageHessians
  {
    double mu = 0.0;
    int horizon = 0;

    std::vector<Matrix> cost_xx, cost_xu, cost_uu; // plain cost Hessians, k < T
    Matrix terminal_cost_xx;

    std::vector<Matrix> dynamics_xx, dynamics_xu, dynamics_uu; // (Q^-1 w_{k+1}) . f tensors, k < T
    std::vector<Matrix> measurement_xx;                         // (R^-1 gamma_k) . h_xx, k = 0 .. T

    /// lbar_xx at stage k; k = T gives the terminal Hessian, augmented by
    /// the final measurement when t = T. At mu = 0 the curvature terms are
    /// dropped.
    Matrix lbar_xx(int k) const
    {
      const auto ks = static_cast<size_t>(k);
      const Matrix &base = k < horizon ? cost_xx[ks] : terminal_cost_xx;
      if (mu == 0.0)
        return base;
      Matrix out = base + measurement_xx[ks] / mu;
      if (k < horizon)
        out += dynamics_xx[ks] / mu;
      return out;
    }
    Matrix lbar_xu(int k) const
    {
      const auto ks = static_cast<size_t>(k);
      return mu == 0.0 ? cost_xu[ks] : Matrix(cost_xu[ks] + dynamics_xu[ks] / mu);
    }
    Matrix lbar_ux(int k) const { return lbar_xu(k).transpose(); }
    Matrix lbar_uu(int k) const
    {
      const auto ks = static_cast<size_t>(k);
      return mu == 0.0 ? cost_uu[ks] : Matrix(cost_uu[ks] + dynamics_uu[ks] / mu);
    }

    /// mu * lbar_xx[k] for k < T, well defined at mu = 0.
    Matrix scaled_xx(int k) const
    {
      const auto ks = static_cast<size_t>(k);
      return mu * cost_xx[ks] + dynamics_xx[ks] + measurement_xx[ks];
    }
  };

  inline AugmentedStageHessians augmented_hessians(const StagewiseProblem &problem, const Residuals &r,
                                                   const TrajectoryExpansion &e, const WeightFactors &weights,
                                                   bool gauss_newton)
  {
    const int T = problem.horizon;
    const int t = problem.current_time;
    const Index nx = problem.state_dim();
    const Index nu = problem.control_dim();
    if (!gauss_newton && !e.second_order)
      throw ConfigError("augmented Hessians need second-order model derivatives unless gauss_newton is set");

    AugmentedStageHessians a;
    a.mu = problem.sensitivity;
    a.horizon = T;
    const std::vector<Vector> lambda = detail::weighted_process(weights, r);
    const std::vector<Vector> eta = detail::weighted_measurement(weights, r);

    for (int k = 0; k < T; ++k)
    {
      const auto ks = static_cast<size_t>(k);
      const StageExpansion &s = e.stages[ks];
      a.cost_xx.push_back(s.l.lxx);
      a.cost_xu.push_back(s.l.lxu);
      a.cost_uu.push_back(s.l.luu);
      if (gauss_newton)
      {
        a.dynamics_xx.push_back(Matrix::Zero(nx, nx));
        a.dynamics_xu.push_back(Matrix::Zero(nx, nu));
        a.dynamics_uu.push_back(Matrix::Zero(nu, nu));
      }
      else
      {
        a.dynamics_xx.push_back(symmetrized(contract(lambda[ks + 1], s.f2.fxx, nx, nx)));
        a.dynamics_xu.push_back(contract(lambda[ks + 1], s.f2.fxu, nx, nu));
        a.dynamics_uu.push_back(symmetrized(contract(lambda[ks + 1], s.f2.fuu, nu, nu)));
      }
    }
    a.terminal_cost_xx = e.terminal.lxx;
    for (int k = 0; k <= T; ++k)
    {
      if (gauss_newton || k < 1 || k > t)
        a.measurement_xx.push_back(Matrix::Zero(nx, nx));
      else
        a.measurement_xx.push_back(
            symmetrized(contract(eta[static_cast<size_t>(k - 1)], e.hxx(k), nx, nx)));
    }
    return a;
  }

  inline AugmentedStageHessians augmented_hessians(const StagewiseProblem &problem, const Iterate &iterate,
                                                   const Residuals &r, bool gauss_newton)
  {
    return augmented_hessians(problem, r, expand(problem, iterate, !gauss_newton), factor_weights(problem),
                              gauss_newton);
  }

} // namespace stagewise
