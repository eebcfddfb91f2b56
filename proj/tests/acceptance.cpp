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


// Acceptance run: one line per criterion, non-zero exit if any fails.

#include "fixtures.hpp"
#include "oracles.hpp"

#include "stagewise/cli.hpp"
#include "stagewise/dense_oracle.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

using namespace stagewise;

namespace
{

  struct Outcome
  {
    bool pass = false;
    std::string detail;
  };

  using Clock = std::chrono::steady_clock;

  double seconds_since(Clock::time_point start)
  {
    return std::chrono::duration<double>(Clock::now() - start).count();
  }

  std::string fmt(const char *f, double v)
  {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
  }

  /// Last-three log-log merit slope, ignoring iterates at the rounding floor.
  double merit_order(const SolveResult &r, double floor = 1e-24)
  {
    std::vector<double> m;
    for (const auto &e : r.trace)
      if (e.merit > floor)
        m.push_back(e.merit);
    if (m.size() < 3)
      return std::numeric_limits<double>::quiet_NaN();
    const size_t n = m.size();
    return std::log(m[n - 1] / m[n - 2]) / std::log(m[n - 2] / m[n - 3]);
  }

  /// Directional derivative of a scalar function by Richardson-extrapolated
  /// central differences.
  double slope_along(const std::function<double(double)> &f, double h = 1e-4)
  {
    return (4 * (f(h / 2) - f(-h / 2)) / h - (f(h) - f(-h)) / (2 * h)) / 3;
  }

  Outcome oracle_equivalence()
  {
    const auto start = Clock::now();
    const std::array<double, 3> mus{-0.5, 0.0, 0.3};
    int used = 0, skipped = 0;
    double worst = 0.0;
    for (int seed = 0; used < 30 && seed < 300; ++seed)
    {
      const int T = 1 + seed % 10;
      const auto o = fixtures::options(static_cast<std::uint64_t>(seed), T, (seed * 7) % (T + 1),
                                       mus[static_cast<size_t>(seed % 3)], 1 + seed % 4, 1 + seed % 2, 1 + seed % 3);
      const auto in = fixtures::well_posed(o);
      if (!in)
      {
        ++skipped;
        continue;
      }
      const Vector ps = stack(compute_step(in->problem, in->iterate).step);
      const Vector pd = stack(dense::dense_step(in->problem, in->iterate));
      worst = std::max(worst, fixtures::rel_err(ps, pd));
      ++used;
    }
    const double secs = seconds_since(start);
    return {used == 30 && worst < 1e-8 && secs < 30,
            std::to_string(used) + " instances (" + std::to_string(skipped) + " degenerate skipped), max rel err " +
                fmt("%.2e", worst) + ", " + fmt("%.2f", secs) + " s"};
  }

  Outcome gradient_correctness()
  {
    double worst_g = 0.0, worst_h = 0.0;
    for (int seed = 0; seed < 20; ++seed)
    {
      const double mu = seed % 2 ? 0.3 : -0.5;
      const auto p = models::random_smooth_problem(fixtures::options(seed, 5, seed % 6, mu));
      const Iterate it = models::random_iterate(p, seed, 0.1);
      const Vector z = oracle::stacked(it);
      const Vector g = stack(grad_J(p, it));
      const Vector fd = oracle::gradient([&](const Vector &v) { return eval_J(p, oracle::unstacked(p, v)); }, z);
      worst_g = std::max(worst_g, fixtures::rel_err(g, fd));
      if (seed < 5)
      {
        const Matrix H = dense::assemble(p, it, false).H;
        const Matrix Hfd =
            oracle::jacobian([&](const Vector &v) { return stack(grad_J(p, oracle::unstacked(p, v))); }, z);
        worst_h = std::max(worst_h, (H - Hfd).cwiseAbs().maxCoeff());
      }
    }
    return {worst_g < 1e-5 && worst_h < 1e-4,
            "20 seeds, gradient max rel err " + fmt("%.2e", worst_g) + ", Hessian max abs err " + fmt("%.2e", worst_h)};
  }

  Outcome lq_one_step()
  {
    int solved = 0, one_step = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; solved < 10 && seed < 40; ++seed)
    {
      const double mu = seed % 2 ? 0.3 : -0.5;
      const auto p = models::lq_problem(seed, 3, 2, 2, 8, static_cast<int>(seed % 9), mu);
      const SolveResult r = solve(p, models::random_iterate(p, seed, 0.5));
      if (r.status == SolveStatus::Degenerate)
        continue;
      ++solved;
      if (r.status == SolveStatus::Converged && r.accepted_steps() == 1 && r.trace.front().alpha == 1.0)
        ++one_step;
      worst = std::max(worst, r.last().merit);
    }
    return {solved == 10 && one_step == 10 && worst < 1e-12,
            std::to_string(one_step) + "/" + std::to_string(solved) + " one full step, max final merit " +
                fmt("%.2e", worst)};
  }

  Outcome descent_identity()
  {
    int checked = 0;
    double worst = 0.0;
    for (int seed = 0; checked < 10 && seed < 40; ++seed)
    {
      const double mu = seed % 2 ? 0.3 : -0.5;
      const auto in = fixtures::well_posed(fixtures::options(seed, 5, seed % 6, mu, 3, 2, 2, 0.5));
      if (!in)
        continue;
      const auto &p = in->problem;
      const StepResult r = compute_step(p, in->iterate);
      const Vector d = stack(r.step);
      const Vector z = oracle::stacked(in->iterate);
      const double s = slope_along([&](double a) { return merit(p, oracle::unstacked(p, z + a * d)); });
      worst = std::max(worst, std::abs(s / -r.diagnostics.grad_sq - 1.0));
      ++checked;
    }
    return {checked == 10 && worst < 1e-6, std::to_string(checked) + " instances, max rel err " + fmt("%.2e", worst)};
  }

  Outcome quadratic_convergence()
  {
    int runs = 0, measured = 0, below = 0;
    double lowest = std::numeric_limits<double>::infinity();
    double worst_constant = 0.0;
    auto record = [&](const SolveResult &r) {
      if (r.status != SolveStatus::Converged)
        return;
      ++runs;
      const size_t n = r.trace.size();
      for (size_t i = n > 3 ? n - 2 : 1; i < n; ++i)
      {
        const double prev = r.trace[i - 1].merit, next = r.trace[i].merit;
        if (prev > 1e-24 && next > 1e-24)
          worst_constant = std::max(worst_constant, next / (prev * prev));
      }
      const double order = merit_order(r);
      if (std::isnan(order))
        return;
      ++measured;
      below += order < 1.8;
      lowest = std::min(lowest, order);
    };
    for (int seed = 0; seed < 16; ++seed)
    {
      const double mu = seed % 2 ? 0.3 : -0.5;
      const auto p = models::random_smooth_problem(fixtures::options(seed, 8, seed % 9, mu));
      record(solve(p, models::random_iterate(p, seed)));
    }
    const models::PlanarQuadrotorParams params;
    const Iterate plan = sim::quadrotor_neutral_plan(params, 60);
    for (double mu : {-6.0, 3.0, 6.0})
      record(solve(models::quadrotor_problem(params, mu, 60, 0), plan));
    return {measured > 0 && below == 0,
            std::to_string(runs) + " converged runs, " + std::to_string(measured) +
                " with three iterates above round-off; min slope " + fmt("%.3f", lowest) + ", " +
                std::to_string(below) + " below 1.8; max f_{k+1}/f_k^2 over final steps " +
                fmt("%.3g", worst_constant)};
  }

  Outcome linear_scaling()
  {
    const auto start = Clock::now();
    config::ModelConfig m;
    m.name = "lq";
    m.nx = 8;
    m.nu = 4;
    m.ny = 4;
    m.t = 3;
    m.mu = 0.3;
    config::BenchSection b;
    b.reps = 41;
    b.dense = true;
    b.dense_reps = 3;
    std::ostringstream log;
    const cli::BenchResult r = cli::run_bench(m, b, 0, false, log);
    const double secs = seconds_since(start);
    return {r.slope >= 0.8 && r.slope <= 1.3 && r.dense_slope >= 2.5 && secs < 120,
            "stagewise slope " + fmt("%.3f", r.slope) + ", dense slope " + fmt("%.3f", r.dense_slope) + ", " +
                fmt("%.1f", secs) + " s"};
  }

  Outcome certainty_equivalence()
  {
    bool exact = true;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial)
    {
      Matrix A(3, 3), V(3, 3);
      Vector muhat(3), v(3);
      for (Index i = 0; i < 3; ++i)
      {
        muhat(i) = n(rng);
        v(i) = 1e3 * n(rng);
        for (Index j = 0; j < 3; ++j)
        {
          A(i, j) = n(rng);
          V(i, j) = 10 * n(rng);
        }
      }
      const Matrix P = A * A.transpose() + Matrix::Identity(3, 3);
      V = (V + V.transpose()).eval();
      exact = exact && couple(P, muhat, V, v, 0.0) == muhat;
    }

    double worst = 0.0;
    int checked = 0;
    for (int seed = 0; seed < 8; ++seed)
    {
      auto p = models::random_smooth_problem(fixtures::options(seed, 6, 3, 0.0));
      Iterate it = models::random_iterate(p, seed, 0.05);
      restore_future_feasibility(p, it);
      const Vector p0 = stack(compute_step(p, it).step);
      for (double mu : {1e-8, -1e-8})
      {
        p.sensitivity = mu;
        const Vector pm = stack(compute_step(p, it).step);
        worst = std::max(worst, (pm - p0).norm() / std::max(1.0, p0.norm()));
      }
      ++checked;
    }
    return {exact && worst < 1e-5, std::string("coupling at mu = 0 ") + (exact ? "exact" : "NOT exact") +
                                       " on 20 draws; max step change at mu = +-1e-8 " + fmt("%.2e", worst) + " over " +
                                       std::to_string(checked) + " instances"};
  }

  Outcome map_special_case()
  {
    double worst = 0.0;
    bool converged = true;
    for (double mu : {0.3, -0.5, 0.0})
      for (std::uint64_t seed : {1u, 2u, 3u})
      {
        const auto p = models::lq_problem(seed, 3, 1, 2, 7, 7, mu, true);
        const SolveResult r = solve(p, models::random_iterate(p, seed, 0.3));
        converged = converged && r.status == SolveStatus::Converged;
        const auto xs = oracle::weighted_least_squares_map(p);
        for (size_t k = 0; k < xs.size(); ++k)
          worst = std::max(worst, (r.iterate.states[k] - xs[k]).norm());
      }
    return {converged && worst < 1e-8, "9 instances (mu in {0.3, -0.5, 0}), max state error " + fmt("%.2e", worst)};
  }

  Outcome sweep_trend()
  {
    const auto start = Clock::now();
    const sim::ClosedLoopTemplate tpl = sim::quadrotor_template({}, 60);
    const auto sweep = sim::open_loop_mu_sweep(tpl, {-14, -6, 0, 3, 6});
    bool ok = true;
    std::string detail = "clearance";
    for (size_t i = 0; i < sweep.size(); ++i)
    {
      ok = ok && sweep[i].status == SolveStatus::Converged;
      if (i > 0)
        ok = ok && sweep[i].clearance < sweep[i - 1].clearance - 1e-6;
      detail += " " + fmt("%g", sweep[i].mu) + ":" + fmt("%.4f", sweep[i].clearance);
    }
    const double secs = seconds_since(start);
    return {ok && secs < 60, detail + " (strictly decreasing in mu), " + fmt("%.1f", secs) + " s"};
  }

  Outcome closed_loop_trend()
  {
    const auto start = Clock::now();
    const sim::ClosedLoopTemplate tpl = sim::quadrotor_template({}, 60);
    sim::SimConfig c;
    c.n_rollouts = 100;
    c.seed = 7;
    c.mu = 6.0;
    const sim::SimResult game = sim::run_closed_loop(tpl, c);
    c.mu = 0.0;
    const sim::SimResult neutral = sim::run_closed_loop(tpl, c);
    const double secs = seconds_since(start);
    const bool clearance = game.mean_clearance > neutral.mean_clearance;
    const bool spread = game.time_averaged_control_std() > neutral.time_averaged_control_std();
    return {clearance && spread && secs < 600 && !game.failure_rate_flag && !neutral.failure_rate_flag,
            "100 rollouts; mean clearance game " + fmt("%.4f", game.mean_clearance) + " vs neutral " +
                fmt("%.4f", neutral.mean_clearance) + (clearance ? " (larger)" : " (NOT larger)") +
                "; control std game " + fmt("%.4f", game.time_averaged_control_std()) + " vs neutral " +
                fmt("%.4f", neutral.time_averaged_control_std()) + (spread ? " (larger)" : " (NOT larger)") +
                "; failures " + std::to_string(game.n_failed) + "/" + std::to_string(neutral.n_failed) + ", " +
                fmt("%.0f", secs) + " s"};
  }

  Outcome degeneracy_detection()
  {
    double worst = 0.0;
    for (std::uint64_t seed : {0u, 1u, 2u, 5u})
    {
      auto p = models::lq_problem(seed, 3, 2, 2, 1, 0, 0.1);
      p.prior_weight = 1e-8 * Matrix::Identity(3, 3);
      const Iterate init = models::random_iterate(p, seed);
      std::vector<double> grid;
      for (double mu = 0.05; mu < 200; mu *= 1.5)
        grid.push_back(mu);
      const BreakdownResult b = find_mu_breakdown(p, init, grid, {}, 1e-4);
      const double bound = oracle::whittle_bound(p, init.states.back());
      worst = std::max(worst, b.found ? std::abs(b.mu / bound - 1.0) : 1.0);
    }

    const models::PlanarQuadrotorParams params;
    const Iterate plan = sim::quadrotor_neutral_plan(params, 60);
    std::vector<double> grid;
    for (double mu = 2; mu <= 120; mu += 2)
      grid.push_back(mu);
    const BreakdownResult q = find_mu_breakdown(models::quadrotor_problem(params, 6.0, 60, 0), plan, grid);
    const bool lq_ok = worst < 5e-3;
    const bool quad_ok = q.found && q.mu >= 10 && q.mu <= 30;
    return {lq_ok && quad_ok, "LQ vs eigenvalue bound max rel err " + fmt("%.2e", worst) +
                                  (lq_ok ? " (2 significant digits)" : " (mismatch)") + "; quadrotor breakdown " +
                                  (q.found ? fmt("%.2f", q.mu) : std::string("not found")) +
                                  (quad_ok ? " (in [10, 30])" : " (outside [10, 30])")};
  }

  Outcome cooperative_case()
  {
    int converged = 0;
    bool monotone = true;
    for (int seed = 0; seed < 8; ++seed)
    {
      const auto p = models::random_smooth_problem(fixtures::options(seed, 8, 4, -0.5, 3, 2, 2, 0.05));
      const SolveResult r = solve(p, models::random_iterate(p, seed, 0.05));
      converged += r.status == SolveStatus::Converged;
      for (size_t i = 1; i < r.trace.size(); ++i)
        monotone = monotone && r.trace[i].objective <= r.trace[i - 1].objective + 1e-12;
    }
    return {converged == 8 && monotone, std::to_string(converged) + "/8 converged, J " +
                                            (monotone ? "monotone" : "NOT monotone") + " along accepted steps"};
  }

} // namespace

int main()
{
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle equivalence", oracle_equivalence},
      {"gradient correctness", gradient_correctness},
      {"LQ one-step convergence", lq_one_step},
      {"descent identity", descent_identity},
      {"quadratic local convergence", quadratic_convergence},
      {"linear scaling in T", linear_scaling},
      {"certainty-equivalence limit", certainty_equivalence},
      {"MAP special case", map_special_case},
      {"quadrotor mu-sweep trend", sweep_trend},
      {"closed-loop MPC trend", closed_loop_trend},
      {"degeneracy detection", degeneracy_detection},
      {"cooperative case", cooperative_case},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i)
  {
    Outcome o;
    try
    {
      o = criteria[i].second();
    }
    catch (const std::exception &e)
    {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
