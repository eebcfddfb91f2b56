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

// Outer loop: stagewise Newton steps globalized by a backtracking Armijo
// search on the merit 0.5 |grad J|^2. At mu = 0 the merit does not exist and
// solve() dispatches to solve_decoupled(), which searches on two surrogates:
// the MAP residual objective over the past and the running cost of a
// feasible rollout over the future.

#include "stagewise/newton_step.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <optional>

namespace stagewise
{

  enum class SolveStatus
  {
    Converged,
    MaxIters,
    LineSearchFailed,
    Degenerate,
  };

  inline const char *to_string(SolveStatus s)
  {
    switch (s)
    {
    case SolveStatus::Converged:
      return "converged";
    case SolveStatus::MaxIters:
      return "max_iters";
    case SolveStatus::LineSearchFailed:
      return "line_search_failed";
    case SolveStatus::Degenerate:
      return "degenerate";
    }
    return "unknown";
  }

  struct SolverOptions
  {
    double tol_merit_decrease = 1e-12;
    int max_iters = 200;
    double armijo_c = 0.25;
    double alpha_shrink = 0.5;
    double alpha_min = 1.0 / 1048576.0; // 2^-20
    bool gauss_newton = false;
    bool verbose = false;

    void check() const
    {
      if (!(armijo_c > 0.0 && armijo_c < 1.0))
        throw ConfigError("armijo_c must lie in (0, 1)");
      if (!(alpha_shrink > 0.0 && alpha_shrink < 1.0))
        throw ConfigError("alpha_shrink must lie in (0, 1)");
      if (!(tol_merit_decrease > 0.0))
        throw ConfigError("tol_merit_decrease must be positive");
      if (!(alpha_min > 0.0 && alpha_min <= 1.0))
        throw ConfigError("alpha_min must lie in (0, 1]");
      if (max_iters < 0)
        throw ConfigError("max_iters must be non-negative");
    }
  };

  /// One row per visited iterate. `alpha` is the step length accepted when
  /// leaving it (0 for the final iterate).
  struct TraceEntry
  {
    int iter = 0;
    double merit = 0.0;   // f_M, or the past MAP surrogate at mu = 0
    double grad_sq = 0.0; // |grad J|^2, or the surrogate stationarity measure at mu = 0
    double alpha = 0.0;
    double objective = std::numeric_limits<double>::quiet_NaN();     // J (mu != 0 only)
    double future_cost = std::numeric_limits<double>::quiet_NaN();   // mu = 0 only
    double future_alpha = std::numeric_limits<double>::quiet_NaN();  // mu = 0 only
  };

  struct DegeneracyInfo
  {
    std::string pass;
    int index = -1;
    int iteration = -1;
    std::string message;
  };

  struct SolveResult
  {
    Iterate iterate;
    SolveStatus status = SolveStatus::MaxIters;
    std::vector<TraceEntry> trace;
    std::optional<DegeneracyInfo> degeneracy;

    int accepted_steps() const
    {
      int n = 0;
      for (const auto &e : trace)
        n += (e.alpha > 0.0 || e.future_alpha > 0.0) ? 1 : 0;
      return n;
    }
    const TraceEntry &last() const { return trace.back(); }
  };

  // ---------------------------------------------------------------------------
  // mu = 0 surrogates

  /// 0.5 [w_0'P^-1 w_0 + sum_{j<=t} (w_j'Q_j^-1 w_j + gamma_j'R_j^-1 gamma_j)]: the
  /// negative log posterior of the past states x_0..x_t.
  inline double past_merit(const StagewiseProblem &problem, const Iterate &iterate)
  {
    const WeightFactors weights = factor_weights(problem);
    const Residuals r = compute_residuals(problem, iterate);
    double s = r.process[0].dot(weights.prior.solve(r.process[0]));
    for (int j = 1; j <= problem.current_time; ++j)
    {
      const Vector &w = r.process[static_cast<size_t>(j)];
      s += w.dot(weights.Q(j).solve(w)) + r.gamma(j).dot(weights.R(j).solve(r.gamma(j)));
    }
    return 0.5 * s;
  }

  /// Gradient of past_merit with respect to x_0..x_t.
  inline std::vector<Vector> past_merit_gradient(const StagewiseProblem &problem, const Iterate &iterate)
  {
    const int t = problem.current_time;
    const WeightFactors weights = factor_weights(problem);
    const Residuals r = compute_residuals(problem, iterate);
    std::vector<Vector> g(static_cast<size_t>(t + 1));
    g[0] = weights.prior.solve(r.process[0]);
    for (int k = 1; k <= t; ++k)
    {
      const auto ks = static_cast<size_t>(k);
      const Vector lam = weights.Q(k).solve(r.process[ks]);
      const StageModel &prev = problem.stages[ks - 1];
      const DynamicsJacobian J =
          dynamics_jacobian(prev, iterate.states[ks - 1], problem.past_controls[ks - 1]);
      g[ks - 1] -= J.fx.transpose() * lam;
      const Matrix H = measurement_jacobian(problem.measurement_model(k), iterate.states[ks]);
      g[ks] = lam - H.transpose() * weights.R(k).solve(r.gamma(k));
    }
    return g;
  }

  /// Running plus terminal cost from k = t on.
  inline double future_cost(const StagewiseProblem &problem, const Iterate &iterate)
  {
    double s = 0.0;
    for (int k = problem.current_time; k < problem.horizon; ++k)
      s += problem.stages[static_cast<size_t>(k)].cost(iterate.states[static_cast<size_t>(k)],
                                                      applied_control(problem, iterate, k));
    return s + problem.terminal.cost(iterate.states.back());
  }

  /// Replace x_{t+1..T} with the zero-disturbance rollout from x_t.
  inline void restore_future_feasibility(const StagewiseProblem &problem, Iterate &iterate)
  {
    for (int k = problem.current_time; k < problem.horizon; ++k)
    {
      const auto ks = static_cast<size_t>(k);
      iterate.states[ks + 1] =
          problem.stages[ks].dynamics(iterate.states[ks], iterate.controls[ks - problem.current_time]);
      if (!iterate.states[ks + 1].allFinite())
        throw DivergenceError(k + 1, "rollout produced a non-finite state");
    }
  }

  namespace detail
  {
    inline double finite_or_inf(double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::infinity(); }

    inline double safe_merit(const StagewiseProblem &problem, const Iterate &it)
    {
      try
      {
        return finite_or_inf(merit(problem, it));
      }
      catch (const DivergenceError &)
      {
        return std::numeric_limits<double>::infinity();
      }
    }

    inline void log_iteration(const SolverOptions &o, const TraceEntry &e)
    {
      if (!o.verbose)
        return;
      std::cerr << "iter " << e.iter << "  merit " << e.merit << "  grad_sq " << e.grad_sq << "  alpha " << e.alpha;
      if (!std::isnan(e.future_cost))
        std::cerr << "  future_cost " << e.future_cost << "  future_alpha " << e.future_alpha;
      std::cerr << '\n';
    }

    /// DDP-style rollout: x~_t given, u~_k = u_k + beta g_k + G_k (x~_k - x_k).
    inline Iterate feedback_rollout(const StagewiseProblem &problem, const Iterate &nominal, const Vector &x_t_ref,
                                    const ControlPassData &d, double beta)
    {
      const int t = problem.current_time;
      Iterate next = nominal;
      for (int k = t; k < problem.horizon; ++k)
      {
        const auto ks = static_cast<size_t>(k);
        const Vector &x_ref = k == t ? x_t_ref : nominal.states[ks];
        Vector &u = next.controls[ks - static_cast<size_t>(t)];
        u = nominal.controls[ks - static_cast<size_t>(t)] + beta * d.g[ks] + d.G[ks] * (next.states[ks] - x_ref);
        next.states[ks + 1] = problem.stages[ks].dynamics(next.states[ks], u);
        if (!next.states[ks + 1].allFinite())
          throw DivergenceError(k + 1, "rollout produced a non-finite state");
      }
      return next;
    }
  } // namespace detail

  /// Decoupled mu = 0 solve: iterated smoother over the past, DDP over the
  /// future from the current estimate of x_t.
  inline SolveResult solve_decoupled(const StagewiseProblem &problem_in, const Iterate &initial,
                                     const SolverOptions &options = {})
  {
    options.check();
    if (problem_in.sensitivity != 0.0)
      throw std::invalid_argument("solve_decoupled requires mu = 0");
    require_valid(problem_in);
    const StagewiseProblem &problem = problem_in;
    const int t = problem.current_time;
    const auto ts = static_cast<size_t>(t);
    const double c = options.armijo_c;
    const double tol = options.tol_merit_decrease;

    SolveResult res;
    res.iterate = initial;
    check_iterate(problem, res.iterate);
    try
    {
      restore_future_feasibility(problem, res.iterate);
    }
    catch (const DivergenceError &)
    {
      res.status = SolveStatus::LineSearchFailed;
      return res;
    }

    for (int iter = 0;; ++iter)
    {
      Iterate &it = res.iterate;
      TraceEntry entry;
      entry.iter = iter;
      entry.merit = past_merit(problem, it);
      entry.future_cost = future_cost(problem, it);

      StepResult sr;
      try
      {
        sr = compute_step(problem, it, StepOptions{options.gauss_newton});
      }
      catch (const DegenerateGame &e)
      {
        res.degeneracy = DegeneracyInfo{e.pass(), e.index(), iter, e.what()};
        res.status = SolveStatus::Degenerate;
        entry.grad_sq = std::numeric_limits<double>::quiet_NaN();
        res.trace.push_back(entry);
        return res;
      }

      const std::vector<Vector> gphi = past_merit_gradient(problem, it);
      double slope_past = 0.0;
      entry.grad_sq = 0.0;
      for (size_t k = 0; k <= ts; ++k)
      {
        slope_past += gphi[k].dot(sr.step.p_x[k]);
        entry.grad_sq += gphi[k].squaredNorm();
      }
      double slope_future = 0.0;
      for (int k = t; k < problem.horizon; ++k)
      {
        const auto ks = static_cast<size_t>(k);
        slope_future += sr.control.Qu[ks].dot(sr.control.g[ks]);
        entry.grad_sq += sr.control.Qu[ks].squaredNorm();
      }

      if (-slope_past < tol && -slope_future < tol)
      {
        entry.alpha = entry.future_alpha = 0.0;
        res.trace.push_back(entry);
        detail::log_iteration(options, entry);
        res.status = SolveStatus::Converged;
        return res;
      }
      if (iter >= options.max_iters)
      {
        entry.alpha = entry.future_alpha = 0.0;
        res.trace.push_back(entry);
        res.status = SolveStatus::MaxIters;
        return res;
      }

      // Past block: Armijo on the MAP objective.
      Iterate next = it;
      double alpha = 0.0;
      if (-slope_past >= tol)
      {
        if (slope_past > 0.0)
        {
          res.trace.push_back(entry);
          res.status = SolveStatus::LineSearchFailed;
          return res;
        }
        alpha = 1.0;
        for (;;)
        {
          for (size_t k = 0; k <= ts; ++k)
            next.states[k] = it.states[k] + alpha * sr.step.p_x[k];
          double phi = std::numeric_limits<double>::infinity();
          try
          {
            phi = detail::finite_or_inf(past_merit(problem, next));
          }
          catch (const DivergenceError &)
          {
          }
          if (phi <= entry.merit + c * alpha * slope_past)
            break;
          alpha *= options.alpha_shrink;
          if (alpha < options.alpha_min)
          {
            entry.alpha = 0.0;
            res.trace.push_back(entry);
            res.status = SolveStatus::LineSearchFailed;
            return res;
          }
        }
      }

      // Future block: Armijo on the cost of the feedback rollout from the new x_t.
      double beta = 0.0;
      try
      {
        Iterate candidate = detail::feedback_rollout(problem, next, it.states[ts], sr.control, 0.0);
        if (-slope_future >= tol)
        {
          const double reference = detail::finite_or_inf(future_cost(problem, candidate));
          beta = 1.0;
          for (;;)
          {
            double cost = std::numeric_limits<double>::infinity();
            try
            {
              candidate = detail::feedback_rollout(problem, next, it.states[ts], sr.control, beta);
              cost = detail::finite_or_inf(future_cost(problem, candidate));
            }
            catch (const DivergenceError &)
            {
            }
            if (cost <= reference + c * beta * slope_future)
              break;
            beta *= options.alpha_shrink;
            if (beta < options.alpha_min)
            {
              entry.alpha = alpha;
              entry.future_alpha = 0.0;
              res.trace.push_back(entry);
              res.status = SolveStatus::LineSearchFailed;
              return res;
            }
          }
        }
        next = std::move(candidate);
      }
      catch (const DivergenceError &)
      {
        res.trace.push_back(entry);
        res.status = SolveStatus::LineSearchFailed;
        return res;
      }

      entry.alpha = alpha;
      entry.future_alpha = beta;
      res.trace.push_back(entry);
      detail::log_iteration(options, entry);
      it = std::move(next);
    }
  }

  /// Stagewise Newton solve with merit backtracking. mu = 0 is forwarded to
  /// solve_decoupled().
  inline SolveResult solve(const StagewiseProblem &problem, const Iterate &initial, const SolverOptions &options = {})
  {
    options.check();
    if (problem.sensitivity == 0.0)
      return solve_decoupled(problem, initial, options);
    require_valid(problem);

    SolveResult res;
    res.iterate = initial;
    check_iterate(problem, res.iterate);
    double fm = detail::safe_merit(problem, res.iterate);
    if (!std::isfinite(fm))
    {
      res.status = SolveStatus::LineSearchFailed;
      return res;
    }

    for (int iter = 0;; ++iter)
    {
      TraceEntry entry;
      entry.iter = iter;
      entry.merit = fm;
      entry.grad_sq = 2.0 * fm;
      entry.objective = eval_J(problem, res.iterate);

      if (fm < options.tol_merit_decrease)
      {
        res.trace.push_back(entry);
        detail::log_iteration(options, entry);
        res.status = SolveStatus::Converged;
        return res;
      }
      if (iter >= options.max_iters)
      {
        res.trace.push_back(entry);
        res.status = SolveStatus::MaxIters;
        return res;
      }

      StepResult sr;
      try
      {
        sr = compute_step(problem, res.iterate, StepOptions{options.gauss_newton});
      }
      catch (const DegenerateGame &e)
      {
        res.degeneracy = DegeneracyInfo{e.pass(), e.index(), iter, e.what()};
        res.trace.push_back(entry);
        res.status = SolveStatus::Degenerate;
        return res;
      }

      // p' grad f_M = -|grad J|^2 for the exact Newton direction.
      const double slope = -sr.diagnostics.grad_sq;
      double alpha = 1.0;
      Iterate next;
      double fn = 0.0;
      for (;;)
      {
        next = advance(res.iterate, sr.step, alpha);
        fn = detail::safe_merit(problem, next);
        if (fn <= fm + options.armijo_c * alpha * slope)
          break;
        alpha *= options.alpha_shrink;
        if (alpha < options.alpha_min)
        {
          res.trace.push_back(entry);
          detail::log_iteration(options, entry);
          res.status = SolveStatus::LineSearchFailed;
          return res;
        }
      }

      entry.alpha = alpha;
      res.trace.push_back(entry);
      detail::log_iteration(options, entry);
      res.iterate = std::move(next);
      const double decrease = fm - fn;
      fm = fn;
      if (decrease < options.tol_merit_decrease)
      {
        TraceEntry final_entry;
        final_entry.iter = iter + 1;
        final_entry.merit = fm;
        final_entry.grad_sq = 2.0 * fm;
        final_entry.objective = eval_J(problem, res.iterate);
        res.trace.push_back(final_entry);
        res.status = SolveStatus::Converged;
        return res;
      }
    }
  }

  // ---------------------------------------------------------------------------
  // Breakdown search

  struct BreakdownResult
  {
    double mu = std::numeric_limits<double>::quiet_NaN(); // smallest degenerate mu found
    double last_well_posed = std::numeric_limits<double>::quiet_NaN();
    bool found = false; // false: no breakdown on the grid, mu is the upper grid bound
    int solves = 0;
  };

  /// True when the game at this mu is degenerate: the solve reports
  /// Degenerate or a step at its final iterate throws DegenerateGame.
  inline bool is_degenerate_at(StagewiseProblem problem, const Iterate &initial, double mu,
                               const SolverOptions &options)
  {
    problem.sensitivity = mu;
    const SolveResult r = solve(problem, initial, options);
    if (r.status == SolveStatus::Degenerate)
      return true;
    try
    {
      compute_step(problem, r.iterate, StepOptions{options.gauss_newton});
    }
    catch (const DegenerateGame &)
    {
      return true;
    }
    return false;
  }

  /// Smallest mu on an increasing positive grid at which the game breaks
  /// down, refined by bisection to relative width `rel_tol`.
  inline BreakdownResult find_mu_breakdown(const StagewiseProblem &problem, const Iterate &initial,
                                           const std::vector<double> &mu_grid, const SolverOptions &options = {},
                                           double rel_tol = 1e-3)
  {
    if (mu_grid.empty())
      throw ConfigError("mu grid is empty");
    for (size_t i = 0; i < mu_grid.size(); ++i)
      if (!(mu_grid[i] > 0.0) || (i > 0 && !(mu_grid[i] > mu_grid[i - 1])))
        throw ConfigError("mu grid must be increasing and positive");

    BreakdownResult out;
    double lo = 0.0;
    for (double mu : mu_grid)
    {
      ++out.solves;
      if (is_degenerate_at(problem, initial, mu, options))
      {
        double hi = mu;
        while (hi - lo > rel_tol * hi)
        {
          const double mid = 0.5 * (lo + hi);
          ++out.solves;
          if (is_degenerate_at(problem, initial, mid, options))
            hi = mid;
          else
            lo = mid;
        }
        out.mu = hi;
        out.last_well_posed = lo;
        out.found = true;
        return out;
      }
      lo = mu;
    }
    out.mu = mu_grid.back();
    out.last_well_posed = mu_grid.back();
    return out;
  }

} // namespace stagewise
