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

// Closed-loop Monte-Carlo simulation of output-feedback MPC with a fixed
// horizon T and a growing split time t, plus open-loop mu sweeps.

#include "stagewise/models.hpp"
#include "stagewise/solver.hpp"

#include <atomic>
#include <functional>
#include <mutex>
#include <random>
#include <thread>

namespace stagewise::sim
{

  /// Everything the simulator needs besides the noise configuration.
  struct ClosedLoopTemplate
  {
    StagewiseProblem problem;  // current_time = 0; supplies T, models, P, Q, prior
    Matrix measurement_weight; // R, used for every measured step
    Iterate initial_guess;     // plan at t = 0 used to start the first solve
    /// Obstacle clearance of a trajectory (states x_0..x_T, controls u_0..u_{T-1}).
    std::function<double(const std::vector<Vector> &, const std::vector<Vector> &)> clearance;
  };

  struct SimConfig
  {
    int n_rollouts = 1000;
    double mu = 6.0; // 0 selects the neutral (decoupled) controller
    std::uint64_t seed = 0;
    double noise_scale = 1.0; // multiplies every noise standard deviation
    bool cold_start = false;
    int threads = 0; // 0: hardware concurrency
    SolverOptions solver;

    void check() const
    {
      if (n_rollouts < 1)
        throw ConfigError("n_rollouts must be >= 1");
      if (!(noise_scale >= 0.0))
        throw ConfigError("noise_scale must be non-negative");
      if (threads < 0)
        throw ConfigError("threads must be non-negative");
      solver.check();
    }
  };

  struct RolloutRecord
  {
    int index = 0;
    bool failed = false;
    SolveStatus failure_status = SolveStatus::Converged;
    int failure_step = -1;
    double cost = 0.0;
    double clearance = 0.0;
    int solver_iterations = 0;
    std::vector<Vector> states;   // true x_0..x_T
    std::vector<Vector> controls; // applied u_0..u_{T-1}
  };

  /// One-pass mean / variance accumulator (Welford), with the pairwise
  /// merge rule for combining partial results.
  class RunningMoments
  {
  public:
    void add(const Vector &x)
    {
      if (n_ == 0)
      {
        mean_ = Vector::Zero(x.size());
        m2_ = Vector::Zero(x.size());
      }
      ++n_;
      const Vector delta = x - mean_;
      mean_ += delta / static_cast<double>(n_);
      m2_ += delta.cwiseProduct(x - mean_);
    }

    void merge(const RunningMoments &other)
    {
      if (other.n_ == 0)
        return;
      if (n_ == 0)
      {
        *this = other;
        return;
      }
      const double n = static_cast<double>(n_ + other.n_);
      const Vector delta = other.mean_ - mean_;
      mean_ += delta * (static_cast<double>(other.n_) / n);
      m2_ += other.m2_ + delta.cwiseProduct(delta) * (static_cast<double>(n_) * static_cast<double>(other.n_) / n);
      n_ += other.n_;
    }

    long count() const { return n_; }
    const Vector &mean() const { return mean_; }
    /// Population standard deviation (zero for fewer than two samples).
    Vector stddev() const
    {
      if (n_ < 2)
        return Vector::Zero(mean_.size());
      return (m2_ / static_cast<double>(n_)).cwiseMax(0.0).cwiseSqrt();
    }

  private:
    long n_ = 0;
    Vector mean_;
    Vector m2_;
  };

  struct SimResult
  {
    int n_rollouts = 0;
    int n_failed = 0;
    bool failure_rate_flag = false; // more than 1% of rollouts failed
    std::vector<Vector> state_mean, state_std;     // k = 0..T
    std::vector<Vector> control_mean, control_std; // k = 0..T-1
    std::vector<RolloutRecord> rollouts;           // all rollouts, index order
    double mean_clearance = std::numeric_limits<double>::quiet_NaN();
    double std_clearance = std::numeric_limits<double>::quiet_NaN();
    double mean_cost = std::numeric_limits<double>::quiet_NaN();

    /// Standard deviation of the controls averaged over time and channels.
    double time_averaged_control_std() const
    {
      double s = 0.0;
      Index n = 0;
      for (const auto &v : control_std)
      {
        s += v.sum();
        n += v.size();
      }
      return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
    }
  };

  /// Independent stream per rollout, so results do not depend on scheduling
  /// and running N then N + M rollouts reproduces the first N.
  inline std::mt19937_64 rollout_rng(std::uint64_t seed, int index)
  {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), 0x5eedu};
    return std::mt19937_64(seq);
  }

  namespace detail
  {
    inline Vector gaussian(std::mt19937_64 &rng, const Matrix &chol_lower, double scale)
    {
      std::normal_distribution<double> normal(0.0, 1.0);
      Vector z(chol_lower.rows());
      for (Index i = 0; i < z.size(); ++i)
        z(i) = normal(rng);
      return scale * (chol_lower * z);
    }

    inline Matrix lower_factor(const Matrix &spd)
    {
      Eigen::LLT<Matrix> llt(spd);
      if (llt.info() != Eigen::Success)
        throw ConfigError("noise covariance not positive-definite");
      return llt.matrixL();
    }

    /// Problem at split time k from the template and the history so far.
    inline StagewiseProblem problem_at(const ClosedLoopTemplate &tpl, double mu, const std::vector<Vector> &ys,
                                       const std::vector<Vector> &us)
    {
      StagewiseProblem p = tpl.problem;
      p.sensitivity = mu;
      p.current_time = static_cast<int>(ys.size());
      p.measurements = ys;
      p.past_controls = us;
      p.measurement_weights.assign(ys.size(), tpl.measurement_weight);
      return p;
    }

    inline SolveResult solve_any(const StagewiseProblem &p, const Iterate &init, const SolverOptions &o)
    {
      return p.sensitivity == 0.0 ? solve_decoupled(p, init, o) : solve(p, init, o);
    }

    template <class Fn>
    void parallel_for(int n, int threads, Fn &&fn)
    {
      int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
      workers = std::max(1, std::min(workers, n));
      if (workers == 1)
      {
        for (int i = 0; i < n; ++i)
          fn(i);
        return;
      }
      std::atomic<int> next{0};
      std::vector<std::thread> pool;
      std::exception_ptr error;
      std::mutex error_mutex;
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (int i = next++; i < n; i = next++)
          {
            try
            {
              fn(i);
            }
            catch (...)
            {
              std::lock_guard<std::mutex> lock(error_mutex);
              if (!error)
                error = std::current_exception();
            }
          }
        });
      for (auto &th : pool)
        th.join();
      if (error)
        std::rethrow_exception(error);
    }
  } // namespace detail

  /// One closed-loop run. At step k the game with measurement history
  /// y_1..y_k and applied controls u_0..u_{k-1} is solved and u_k applied to
  /// the true system.
  inline RolloutRecord run_rollout(const ClosedLoopTemplate &tpl, const SimConfig &cfg, int index)
  {
    const StagewiseProblem &base = tpl.problem;
    const int T = base.horizon;
    std::mt19937_64 rng = rollout_rng(cfg.seed, index);

    RolloutRecord rec;
    rec.index = index;
    Vector x = base.prior_mean + detail::gaussian(rng, detail::lower_factor(base.prior_weight), cfg.noise_scale);
    rec.states.push_back(x);

    std::vector<Vector> ys;
    Iterate guess = tpl.initial_guess;
    for (int k = 0; k < T; ++k)
    {
      const StagewiseProblem p = detail::problem_at(tpl, cfg.mu, ys, rec.controls);
      Iterate init;
      if (k == 0)
        init = tpl.initial_guess;
      else if (cfg.cold_start)
        init = rollout_iterate(p, std::vector<Vector>(tpl.initial_guess.controls.begin() + k,
                                                      tpl.initial_guess.controls.end()));
      else
      {
        // The applied control becomes data; the rest of the plan is reused.
        init = guess;
        init.controls.erase(init.controls.begin());
      }

      SolveResult r;
      try
      {
        r = detail::solve_any(p, init, cfg.solver);
      }
      catch (const DivergenceError &)
      {
        r.status = SolveStatus::LineSearchFailed;
      }
      rec.solver_iterations += r.accepted_steps();
      if (r.status != SolveStatus::Converged)
      {
        rec.failed = true;
        rec.failure_status = r.status;
        rec.failure_step = k;
        return rec;
      }
      guess = r.iterate;
      const Vector u = r.iterate.controls.front();

      const auto ks = static_cast<size_t>(k);
      rec.cost += base.stages[ks].cost(x, u);
      x = base.stages[ks].dynamics(x, u) +
          detail::gaussian(rng, detail::lower_factor(base.process_weight(k + 1)), cfg.noise_scale);
      const MeasurementModel &h = base.measurement_model(k + 1);
      ys.push_back(h.h(x) + detail::gaussian(rng, detail::lower_factor(tpl.measurement_weight), cfg.noise_scale));
      rec.controls.push_back(u);
      rec.states.push_back(x);
      if (!x.allFinite())
      {
        rec.failed = true;
        rec.failure_status = SolveStatus::LineSearchFailed;
        rec.failure_step = k + 1;
        return rec;
      }
    }
    rec.cost += base.terminal.cost(x);
    rec.clearance = tpl.clearance ? tpl.clearance(rec.states, rec.controls) : std::numeric_limits<double>::quiet_NaN();
    return rec;
  }

  /// Monte-Carlo closed loop. Failed rollouts are excluded from the
  /// statistics and counted.
  inline SimResult run_closed_loop(const ClosedLoopTemplate &tpl, const SimConfig &cfg)
  {
    cfg.check();
    if (tpl.problem.current_time != 0)
      throw ConfigError("closed-loop template must have t = 0");
    require_valid(tpl.problem);
    const Index ny = tpl.problem.terminal.measurement.ny;
    if (tpl.measurement_weight.rows() != ny || tpl.measurement_weight.cols() != ny)
      throw ConfigError("measurement weight must be " + std::to_string(ny) + "x" + std::to_string(ny));

    SimResult out;
    out.n_rollouts = cfg.n_rollouts;
    out.rollouts.resize(static_cast<size_t>(cfg.n_rollouts));
    detail::parallel_for(cfg.n_rollouts, cfg.threads,
                         [&](int i) { out.rollouts[static_cast<size_t>(i)] = run_rollout(tpl, cfg, i); });

    const int T = tpl.problem.horizon;
    std::vector<RunningMoments> xs(static_cast<size_t>(T + 1)), us(static_cast<size_t>(T));
    RunningMoments clearance, cost;
    for (const auto &r : out.rollouts)
    {
      if (r.failed)
      {
        ++out.n_failed;
        continue;
      }
      for (int k = 0; k <= T; ++k)
        xs[static_cast<size_t>(k)].add(r.states[static_cast<size_t>(k)]);
      for (int k = 0; k < T; ++k)
        us[static_cast<size_t>(k)].add(r.controls[static_cast<size_t>(k)]);
      clearance.add(Vector::Constant(1, r.clearance));
      cost.add(Vector::Constant(1, r.cost));
    }
    out.failure_rate_flag = out.n_failed * 100 > cfg.n_rollouts;
    for (const auto &m : xs)
    {
      out.state_mean.push_back(m.count() ? m.mean() : Vector());
      out.state_std.push_back(m.count() ? m.stddev() : Vector());
    }
    for (const auto &m : us)
    {
      out.control_mean.push_back(m.count() ? m.mean() : Vector());
      out.control_std.push_back(m.count() ? m.stddev() : Vector());
    }
    if (clearance.count())
    {
      out.mean_clearance = clearance.mean()(0);
      out.std_clearance = clearance.stddev()(0);
      out.mean_cost = cost.mean()(0);
    }
    return out;
  }

  // ---------------------------------------------------------------------------
  // Open-loop sweep

  struct SweepEntry
  {
    double mu = 0.0;
    SolveStatus status = SolveStatus::MaxIters;
    Iterate plan;
    double clearance = std::numeric_limits<double>::quiet_NaN();
    std::string message; // degeneracy details when status is Degenerate
  };

  /// Solve the t = 0 game for each mu from the same initial guess.
  inline std::vector<SweepEntry> open_loop_mu_sweep(const ClosedLoopTemplate &tpl, const std::vector<double> &mus,
                                                   const SolverOptions &options = {})
  {
    std::vector<SweepEntry> out;
    for (double mu : mus)
    {
      SweepEntry e;
      e.mu = mu;
      StagewiseProblem p = tpl.problem;
      p.sensitivity = mu;
      try
      {
        const SolveResult r = detail::solve_any(p, tpl.initial_guess, options);
        e.status = r.status;
        e.plan = r.iterate;
        if (r.degeneracy)
          e.message = r.degeneracy->message;
      }
      catch (const DivergenceError &err)
      {
        e.status = SolveStatus::LineSearchFailed;
        e.message = err.what();
      }
      if (e.status == SolveStatus::Converged && tpl.clearance)
      {
        std::vector<Vector> controls;
        for (int k = 0; k < p.horizon; ++k)
          controls.push_back(applied_control(p, e.plan, k));
        e.clearance = tpl.clearance(e.plan.states, controls);
      }
      out.push_back(std::move(e));
    }
    return out;
  }

  // ---------------------------------------------------------------------------
  // Quadrotor setup

  /// Neutral (mu = 0) plan from the hover rollout. Used as the initial guess
  /// for every game solve on the quadrotor.
  inline Iterate quadrotor_neutral_plan(const models::PlanarQuadrotorParams &params, int T,
                                        const models::QuadrotorWeights &weights = {},
                                        const models::QuadrotorTask &task = {}, const SolverOptions &options = {})
  {
    const StagewiseProblem p = models::quadrotor_problem(params, 0.0, T, 0, weights, task);
    const SolveResult r = solve_decoupled(p, rollout_iterate(p, models::quadrotor_hover_control(params)), options);
    if (r.status != SolveStatus::Converged)
      throw std::runtime_error(std::string("neutral quadrotor plan did not converge: ") + to_string(r.status));
    return r.iterate;
  }

  inline ClosedLoopTemplate quadrotor_template(const models::PlanarQuadrotorParams &params, int T = 60,
                                               const models::QuadrotorWeights &weights = {},
                                               const models::QuadrotorTask &task = {},
                                               const SolverOptions &options = {}, int clearance_substeps = 20)
  {
    ClosedLoopTemplate tpl;
    tpl.problem = models::quadrotor_problem(params, 0.0, T, 0, weights, task);
    tpl.measurement_weight = weights.measurement;
    tpl.initial_guess = quadrotor_neutral_plan(params, T, weights, task, options);
    const Vector center = task.obstacle_center;
    tpl.clearance = [params, center, clearance_substeps](const std::vector<Vector> &xs,
                                                         const std::vector<Vector> &us) {
      return models::quadrotor_clearance(params, xs, us, center, clearance_substeps);
    };
    return tpl;
  }

} // namespace stagewise::sim
