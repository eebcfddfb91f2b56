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

// Exact Newton direction for the saddle objective in O(T) operations.
//
// The step is computed by five sweeps over time:
//   1. estimation forward pass  (k = 0 .. t-1)   risk-sensitive filter
//   2. control backward pass    (k = T-1 .. t)   minimax Riccati recursion
//   3. coupling at k = t
//   4. estimation backward pass (k = t-1 .. 0)   smoother
//   5. control forward pass     (k = t .. T-1)   linearized rollout
//
// The returned step solves H p = -grad J, i.e. it is oriented as a descent
// direction of the merit 0.5 |grad J|^2 with p' grad f_M = -|grad J|^2.
//
// At mu = 0 every mu-scaled term is dropped analytically: the past block
// becomes a Newton step on the MAP estimation problem and the future block a
// Gauss-Newton (iLQR) step that uses the estimate at time t.

#include "stagewise/objective.hpp"

#include <Eigen/LU>

#include <chrono>
#include <cmath>
#include <limits>

namespace stagewise
{

  struct NewtonStep
  {
    std::vector<Vector> p_x; // 0 .. T
    std::vector<Vector> p_u; // t .. T-1, stored at index k - t

    double squared_norm() const
    {
      double s = 0.0;
      for (const auto &p : p_x)
        s += p.squaredNorm();
      for (const auto &p : p_u)
        s += p.squaredNorm();
      return s;
    }
  };

  /// Stack (x_0, .., x_T, u_t, .., u_{T-1}) into one vector.
  inline Vector stack(const std::vector<Vector> &xs, const std::vector<Vector> &us)
  {
    Index n = 0;
    for (const auto &v : xs)
      n += v.size();
    for (const auto &v : us)
      n += v.size();
    Vector out(n);
    Index offset = 0;
    for (const auto *blocks : {&xs, &us})
      for (const auto &v : *blocks)
      {
        out.segment(offset, v.size()) = v;
        offset += v.size();
      }
    return out;
  }

  inline Vector stack(const NewtonStep &p) { return stack(p.p_x, p.p_u); }
  inline Vector stack(const GradientBlocks &g) { return stack(g.x, g.u); }
  inline Vector stack(const Iterate &it) { return stack(it.states, it.controls); }

  /// Inverse of stack() for a given layout.
  inline NewtonStep unstack_step(const Vector &z, int T, int t, Index nx, Index nu)
  {
    NewtonStep p;
    Index offset = 0;
    for (int k = 0; k <= T; ++k, offset += nx)
      p.p_x.push_back(z.segment(offset, nx));
    for (int k = t; k < T; ++k, offset += nu)
      p.p_u.push_back(z.segment(offset, nu));
    return p;
  }

  /// x + alpha p, u + alpha p_u.
  inline Iterate advance(const Iterate &it, const NewtonStep &p, double alpha)
  {
    Iterate next = it;
    for (size_t k = 0; k < next.states.size(); ++k)
      next.states[k] += alpha * p.p_x[k];
    for (size_t k = 0; k < next.controls.size(); ++k)
      next.controls[k] += alpha * p.p_u[k];
    return next;
  }

  /// Everything the passes need, evaluated once at the nominal trajectory.
  struct LocalModel
  {
    Residuals residuals;
    TrajectoryExpansion expansion;
    WeightFactors weights;
    AugmentedStageHessians hessians;
  };

  inline LocalModel linearize(const StagewiseProblem &problem, const Iterate &iterate, bool gauss_newton)
  {
    LocalModel m;
    m.residuals = compute_residuals(problem, iterate);
    m.expansion = expand(problem, iterate, !gauss_newton);
    m.weights = factor_weights(problem);
    m.hessians = augmented_hessians(problem, m.residuals, m.expansion, m.weights, gauss_newton);
    return m;
  }

  /// Value-function recursion over the future (k >= t). Vectors are indexed
  /// by absolute time; entries before t stay empty.
  struct ControlPassData
  {
    std::vector<Matrix> V;     // t .. T
    std::vector<Vector> v;     // t .. T
    std::vector<Matrix> Gamma; // Gamma[k+1] = I - mu V_{k+1} Q_{k+1}, k = t .. T-1
    std::vector<Matrix> G;     // feedback gains, t .. T-1
    std::vector<Vector> g;     // feedforward terms, t .. T-1
    std::vector<Vector> Qu;    // control gradient of the local model, t .. T-1
  };

  /// Risk-sensitive filter over the past (k <= t), indexed by absolute time.
  struct EstimationPassData
  {
    std::vector<Matrix> Pcov;  // 0 .. t
    std::vector<Matrix> Pinv;  // P_k^-1, 0 .. t
    std::vector<Vector> muhat; // 0 .. t
    std::vector<Matrix> E;     // 1 .. t
    std::vector<Matrix> Pbar;  // 1 .. t
    std::vector<Matrix> K;     // 1 .. t
  };

  namespace detail
  {
    inline Matrix inverse_spd(const Matrix &m, const std::string &pass, int index, const std::string &name)
    {
      const Eigen::LLT<Matrix> llt = require_positive_definite(m, pass, index, name);
      return symmetrized(llt.solve(Matrix::Identity(m.rows(), m.cols())));
    }

    /// Solve (I - mu V Q) X = B through the symmetric similar matrix
    /// S = I - mu L' V L with Q = L L'. Cholesky of S is the positive-
    /// definiteness test for Gamma: Gamma^-1 = L^-T S^-1 L'.
    inline Matrix solve_gamma(const Eigen::LLT<Matrix> &q_llt, const Eigen::LLT<Matrix> &s_llt, const Matrix &b)
    {
      const Matrix L = q_llt.matrixL();
      Matrix z = s_llt.solve(L.transpose() * b);
      return L.transpose().triangularView<Eigen::Upper>().solve(z);
    }
  } // namespace detail

  inline ControlPassData control_backward_pass(const StagewiseProblem &problem, const LocalModel &m)
  {
    const int T = problem.horizon;
    const int t = problem.current_time;
    const double mu = problem.sensitivity;
    const Index nx = problem.state_dim();
    const char *pass = "control_backward_pass";

    ControlPassData d;
    d.V.resize(static_cast<size_t>(T + 1));
    d.v.resize(static_cast<size_t>(T + 1));
    d.Gamma.resize(static_cast<size_t>(T + 1));
    d.G.resize(static_cast<size_t>(T));
    d.g.resize(static_cast<size_t>(T));
    d.Qu.resize(static_cast<size_t>(T));

    // Measurement curvature at k = t is applied in the coupling step, so the
    // terminal condition is the plain terminal cost Hessian for every t.
    d.V[static_cast<size_t>(T)] = m.expansion.terminal.lxx;
    d.v[static_cast<size_t>(T)] = m.expansion.terminal.lx;

    for (int k = T - 1; k >= t; --k)
    {
      const auto ks = static_cast<size_t>(k);
      const StageExpansion &s = m.expansion.stages[ks];
      const Matrix &Vn = d.V[ks + 1];
      const Vector &vn = d.v[ks + 1];
      const Vector &w = m.residuals.process[ks + 1];

      Matrix X;  // Gamma^-1 V_{k+1}
      Vector y;  // Gamma^-1 (v_{k+1} - V_{k+1} w_{k+1})
      if (mu == 0.0)
      {
        d.Gamma[ks + 1] = Matrix::Identity(nx, nx);
        X = Vn;
        y = vn - Vn * w;
      }
      else
      {
        const Matrix &Q = problem.process_weight(k + 1);
        d.Gamma[ks + 1] = Matrix::Identity(nx, nx) - mu * Vn * Q;
        const Eigen::LLT<Matrix> &q_llt = m.weights.Q(k + 1);
        const Matrix L = q_llt.matrixL();
        const Eigen::LLT<Matrix> s_llt = require_positive_definite(
            Matrix::Identity(nx, nx) - mu * L.transpose() * Vn * L, pass, k + 1, "Gamma");
        X = symmetrized(detail::solve_gamma(q_llt, s_llt, Vn));
        y = detail::solve_gamma(q_llt, s_llt, vn - Vn * w);
      }

      const Matrix lbar_xx = m.hessians.mu == 0.0
                                 ? m.hessians.cost_xx[ks]
                                 : Matrix(m.hessians.cost_xx[ks] + m.hessians.dynamics_xx[ks] / mu);
      const Matrix Xfu = X * s.f.fu;
      const Matrix Quu = symmetrized(m.hessians.lbar_uu(k) + s.f.fu.transpose() * Xfu);
      const Matrix Qux = m.hessians.lbar_ux(k) + Xfu.transpose() * s.f.fx;
      const Vector Qu = s.l.lu + s.f.fu.transpose() * y;

      const Eigen::LLT<Matrix> quu_llt = require_positive_definite(Quu, pass, k, "Q_uu");
      d.G[ks] = -quu_llt.solve(Qux);
      d.g[ks] = -quu_llt.solve(Qu);
      d.Qu[ks] = Qu;

      d.V[ks] = symmetrized(lbar_xx + s.f.fx.transpose() * X * s.f.fx + Qux.transpose() * d.G[ks]);
      d.v[ks] = s.l.lx + s.f.fx.transpose() * y + Qux.transpose() * d.g[ks];
    }
    return d;
  }

  inline EstimationPassData estimation_forward_pass(const StagewiseProblem &problem, const LocalModel &m)
  {
    const int t = problem.current_time;
    const double mu = problem.sensitivity;
    const Index nx = problem.state_dim();
    const char *pass = "estimation_forward_pass";
    const Matrix I = Matrix::Identity(nx, nx);

    EstimationPassData d;
    d.Pcov.resize(static_cast<size_t>(t + 1));
    d.Pinv.resize(static_cast<size_t>(t + 1));
    d.muhat.resize(static_cast<size_t>(t + 1));
    d.E.resize(static_cast<size_t>(t + 1));
    d.Pbar.resize(static_cast<size_t>(t + 1));
    d.K.resize(static_cast<size_t>(t + 1));

    d.Pcov[0] = problem.prior_weight;
    d.Pinv[0] = detail::inverse_spd(problem.prior_weight, pass, 0, "P_0");
    d.muhat[0] = -m.residuals.process[0];

    for (int k = 0; k < t; ++k)
    {
      const auto ks = static_cast<size_t>(k);
      const StageExpansion &s = m.expansion.stages[ks];
      const Matrix &fx = s.f.fx;
      const Matrix &Q = problem.process_weight(k + 1);
      const Matrix &R = problem.measurement_weight(k + 1);
      const Matrix &H = m.expansion.hx(k + 1);

      const Matrix scaled = m.hessians.scaled_xx(k); // mu * lbar_xx
      const Eigen::LLT<Matrix> a_llt =
          require_positive_definite(d.Pinv[ks] - scaled, pass, k, "P^-1 - mu*lbar_xx");
      const Matrix qinv_fx = m.weights.Q(k + 1).solve(fx);

      d.E[ks + 1] = symmetrized(d.Pinv[ks] - scaled + fx.transpose() * qinv_fx);
      const Eigen::LLT<Matrix> e_llt = require_positive_definite(d.E[ks + 1], pass, k, "E");
      d.Pbar[ks + 1] = symmetrized(Q + fx * a_llt.solve(fx.transpose()));

      const Matrix S = symmetrized(R + H * d.Pbar[ks + 1] * H.transpose());
      const Eigen::LLT<Matrix> s_llt = require_positive_definite(S, pass, k + 1, "innovation covariance");
      d.K[ks + 1] = s_llt.solve(H * d.Pbar[ks + 1]).transpose();

      const Matrix IKH = I - d.K[ks + 1] * H;
      d.Pcov[ks + 1] = symmetrized(IKH * d.Pbar[ks + 1]);
      d.Pinv[ks + 1] = detail::inverse_spd(d.Pcov[ks + 1], pass, k + 1, "P");

      const Vector drift = e_llt.solve(scaled * d.muhat[ks] + mu * s.l.lx);
      d.muhat[ks + 1] = IKH * (fx * d.muhat[ks] - m.residuals.process[ks + 1]) +
                        d.K[ks + 1] * m.residuals.gamma(k + 1) + d.Pcov[ks + 1] * (qinv_fx * drift);
    }
    return d;
  }

  /// p_{x_t} = (P_t^-1 - mu V_t)^-1 (P_t^-1 muhat_t + mu v_t). Exactly muhat_t at mu = 0.
  inline Vector couple(const Matrix &Pcov_t, const Vector &muhat_t, const Matrix &V_t, const Vector &v_t, double mu,
                       int index = 0)
  {
    if (mu == 0.0)
      return muhat_t;
    const Matrix Pinv = detail::inverse_spd(Pcov_t, "couple", index, "P_t");
    const Eigen::LLT<Matrix> llt = require_positive_definite(Pinv - mu * V_t, "couple", index, "P_t^-1 - mu*V_t");
    return llt.solve(Pinv * muhat_t + mu * v_t);
  }

  namespace detail
  {
    /// Coupling with the measurement curvature at t folded in:
    /// (P_t^-1 - mu V_t - C_t) p = P_t^-1 muhat_t + mu v_t.
    inline Vector couple_with_curvature(const Matrix &Pinv, const Vector &muhat, const Matrix &V, const Vector &v,
                                        double mu, const Matrix &curvature, int index)
    {
      if (mu == 0.0 && curvature.isZero(0.0))
        return muhat;
      const Eigen::LLT<Matrix> llt =
          require_positive_definite(Pinv - mu * V - curvature, "couple", index, "P_t^-1 - mu*V_t");
      return llt.solve(Pinv * muhat + mu * v);
    }
  } // namespace detail

  /// p_{x_k} for k = t-1 .. 0 given p_{x_t}; returns entries 0 .. t-1.
  inline std::vector<Vector> estimation_backward_pass(const StagewiseProblem &problem, const LocalModel &m,
                                                      const EstimationPassData &d, const Vector &p_x_t)
  {
    const int t = problem.current_time;
    const double mu = problem.sensitivity;
    std::vector<Vector> p(static_cast<size_t>(t + 1));
    p[static_cast<size_t>(t)] = p_x_t;
    for (int k = t - 1; k >= 0; --k)
    {
      const auto ks = static_cast<size_t>(k);
      const StageExpansion &s = m.expansion.stages[ks];
      const Vector rhs = s.f.fx.transpose() * m.weights.Q(k + 1).solve(m.residuals.process[ks + 1] + p[ks + 1]) +
                         d.Pinv[ks] * d.muhat[ks] + mu * s.l.lx;
      p[ks] = Eigen::LLT<Matrix>(d.E[ks + 1]).solve(rhs);
    }
    p.pop_back();
    return p;
  }

  struct ControlForwardResult
  {
    std::vector<Vector> p_u; // t .. T-1
    std::vector<Vector> p_x; // t+1 .. T
  };

  inline ControlForwardResult control_forward_pass(const StagewiseProblem &problem, const LocalModel &m,
                                                   const ControlPassData &d, const Vector &p_x_t)
  {
    const int T = problem.horizon;
    const int t = problem.current_time;
    const double mu = problem.sensitivity;
    ControlForwardResult out;
    Vector px = p_x_t;
    for (int k = t; k < T; ++k)
    {
      const auto ks = static_cast<size_t>(k);
      const StageExpansion &s = m.expansion.stages[ks];
      Vector pu = d.G[ks] * px + d.g[ks];
      Vector rhs = s.f.fx * px + s.f.fu * pu - m.residuals.process[ks + 1];
      if (mu != 0.0)
      {
        const Matrix &Q = problem.process_weight(k + 1);
        rhs += mu * (Q * d.v[ks + 1]);
        Eigen::PartialPivLU<Matrix> lu(d.Gamma[ks + 1].transpose()); // I - mu Q V_{k+1}
        if (!(std::abs(lu.determinant()) > 0.0))
          throw DegenerateGame("control_forward_pass", k + 1, "I - mu Q V is singular");
        px = lu.solve(rhs);
      }
      else
      {
        px = std::move(rhs);
      }
      out.p_u.push_back(std::move(pu));
      out.p_x.push_back(px);
    }
    return out;
  }

  struct StepOptions
  {
    bool gauss_newton = false;
  };

  struct StepDiagnostics
  {
    double grad_sq = std::numeric_limits<double>::quiet_NaN(); // |grad J|^2, NaN at mu = 0
    long long linearize_ns = 0;
    long long estimation_forward_ns = 0;
    long long control_backward_ns = 0;
    long long coupling_ns = 0;
    long long estimation_backward_ns = 0;
    long long control_forward_ns = 0;
  };

  struct StepResult
  {
    NewtonStep step;
    StepDiagnostics diagnostics;
    ControlPassData control;
    EstimationPassData estimation;
  };

  /// Stagewise Newton step at `iterate`. Throws DegenerateGame tagged with
  /// the failing pass and time index when the game is not well posed there.
  inline StepResult compute_step(const StagewiseProblem &problem, const Iterate &iterate,
                                 const StepOptions &options = {})
  {
    using clock = std::chrono::steady_clock;
    auto elapsed = [](clock::time_point since) {
      return std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - since).count();
    };

    const int t = problem.current_time;
    const double mu = problem.sensitivity;
    StepResult out;

    auto start = clock::now();
    const LocalModel m = linearize(problem, iterate, options.gauss_newton);
    if (mu != 0.0)
      out.diagnostics.grad_sq = grad_J(problem, m.residuals, m.expansion, m.weights).squared_norm();
    out.diagnostics.linearize_ns = elapsed(start);

    start = clock::now();
    out.estimation = estimation_forward_pass(problem, m);
    out.diagnostics.estimation_forward_ns = elapsed(start);

    start = clock::now();
    out.control = control_backward_pass(problem, m);
    out.diagnostics.control_backward_ns = elapsed(start);

    start = clock::now();
    const auto ts = static_cast<size_t>(t);
    const Vector p_x_t =
        detail::couple_with_curvature(out.estimation.Pinv[ts], out.estimation.muhat[ts], out.control.V[ts],
                                      out.control.v[ts], mu, m.hessians.measurement_xx[ts], t);
    out.diagnostics.coupling_ns = elapsed(start);

    start = clock::now();
    out.step.p_x = estimation_backward_pass(problem, m, out.estimation, p_x_t);
    out.step.p_x.push_back(p_x_t);
    out.diagnostics.estimation_backward_ns = elapsed(start);

    start = clock::now();
    ControlForwardResult future = control_forward_pass(problem, m, out.control, p_x_t);
    for (auto &p : future.p_x)
      out.step.p_x.push_back(std::move(p));
    out.step.p_u = std::move(future.p_u);
    out.diagnostics.control_forward_ns = elapsed(start);
    return out;
  }

} // namespace stagewise
