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

// Commands behind the stagewise command-line tool. Each command writes its
// outputs into a directory and returns the process exit code:
//   0 converged / all checks passed, 1 configuration error, 2 degenerate game,
//   3 line search failed, 4 check violation, 5 iteration limit reached.

#include "stagewise/config.hpp"
#include "stagewise/csv.hpp"
#include "stagewise/dense_oracle.hpp"
#include "stagewise/finite_difference.hpp"
#include "stagewise/mpc_sim.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

namespace stagewise::cli
{

  namespace fs = std::filesystem;
  using config::json;
  using config::RunConfig;

  enum ExitCode : int
  {
    kOk = 0,
    kConfigError = 1,
    kDegenerate = 2,
    kLineSearchFailed = 3,
    kCheckFailed = 4,
    kMaxIters = 5,
  };

  inline int exit_code(SolveStatus s)
  {
    switch (s)
    {
    case SolveStatus::Converged:
      return kOk;
    case SolveStatus::Degenerate:
      return kDegenerate;
    case SolveStatus::LineSearchFailed:
      return kLineSearchFailed;
    case SolveStatus::MaxIters:
      return kMaxIters;
    }
    return kConfigError;
  }

  // ---------------------------------------------------------------------------
  // Model construction

  inline StagewiseProblem build_problem(const config::ModelConfig &m, std::uint64_t seed, int T, int t)
  {
    if (m.is_quadrotor())
      return models::quadrotor_problem(m.quadrotor, m.mu, T, t, m.weights);
    models::RandomInstanceOptions o;
    o.seed = seed;
    o.nx = m.nx;
    o.nu = m.nu;
    o.ny = m.ny;
    o.T = T;
    o.t = t;
    o.mu = m.mu;
    o.nonlinearity = m.name == "lq" ? 0.0 : m.nonlinearity;
    o.zero_cost = m.zero_cost;
    return models::random_smooth_problem(o);
  }

  inline StagewiseProblem build_problem(const config::ModelConfig &m, std::uint64_t seed)
  {
    return build_problem(m, seed, m.T, m.t);
  }

  /// `it` with every state and free control shifted by seeded Gaussian noise.
  inline Iterate perturbed(Iterate it, std::uint64_t seed, double scale)
  {
    std::mt19937_64 rng(seed ^ 0x2545f4914f6cdd1dULL);
    std::normal_distribution<double> normal(0.0, scale);
    for (auto *blocks : {&it.states, &it.controls})
      for (auto &v : *blocks)
        for (Index i = 0; i < v.size(); ++i)
          v(i) += normal(rng);
    return it;
  }

  inline Iterate initial_iterate(const config::ModelConfig &m, const StagewiseProblem &p,
                                 const config::SolveSection &s, std::uint64_t seed, const SolverOptions &options)
  {
    if (m.is_quadrotor())
    {
      const Vector hover = models::quadrotor_hover_control(m.quadrotor);
      if (s.initial == "rollout")
        return rollout_iterate(p, hover);
      // The plan is a starting point only, so the run's iteration budget does not apply to it.
      SolverOptions plan_options;
      plan_options.gauss_newton = options.gauss_newton;
      const Iterate plan = sim::quadrotor_neutral_plan(m.quadrotor, p.horizon, m.weights, {}, plan_options);
      Iterate it = rollout_iterate(
          p, std::vector<Vector>(plan.controls.begin() + p.current_time, plan.controls.end()));
      return s.initial == "random" ? perturbed(it, seed, s.perturbation) : it;
    }
    if (s.initial == "rollout")
      return rollout_iterate(p, Vector::Zero(p.control_dim()));
    return models::random_iterate(p, seed, s.perturbation);
  }

  // ---------------------------------------------------------------------------
  // Output helpers

  inline std::vector<std::string> state_names(const config::ModelConfig &m, Index nx)
  {
    if (m.is_quadrotor())
      return {"px", "py", "theta", "vx", "vy", "omega"};
    std::vector<std::string> out;
    for (Index i = 0; i < nx; ++i)
      out.push_back("x" + std::to_string(i + 1));
    return out;
  }

  inline std::vector<std::string> control_names(Index nu)
  {
    std::vector<std::string> out;
    for (Index i = 0; i < nu; ++i)
      out.push_back("u" + std::to_string(i + 1));
    return out;
  }

  /// k, states, controls (the control columns are empty on the final row).
  inline void write_trajectory(const std::string &path, const std::vector<std::string> &xnames,
                               const std::vector<std::string> &unames, const std::vector<Vector> &states,
                               const std::vector<Vector> &controls)
  {
    std::vector<std::string> header{"k"};
    header.insert(header.end(), xnames.begin(), xnames.end());
    header.insert(header.end(), unames.begin(), unames.end());
    csv::Writer w(path, header);
    for (size_t k = 0; k < states.size(); ++k)
    {
      std::vector<std::string> row{std::to_string(k)};
      for (Index i = 0; i < states[k].size(); ++i)
        row.push_back(csv::format(states[k](i)));
      for (size_t i = 0; i < unames.size(); ++i)
        row.push_back(k < controls.size() ? csv::format(controls[k](static_cast<Index>(i))) : "");
      w.row(row);
    }
  }

  inline std::vector<Vector> all_controls(const StagewiseProblem &p, const Iterate &it)
  {
    std::vector<Vector> us;
    for (int k = 0; k < p.horizon; ++k)
      us.push_back(applied_control(p, it, k));
    return us;
  }

  inline void write_json(const fs::path &path, const json &j)
  {
    std::ofstream out(path);
    if (!out)
      throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
  }

  inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

  inline void prepare_output(const RunConfig &c, const fs::path &out)
  {
    fs::create_directories(out);
    write_json(out / "resolved_config.json", config::to_json(c));
  }

  inline SolveResult solve_any(const StagewiseProblem &p, const Iterate &init, const SolverOptions &o)
  {
    try
    {
      return sim::detail::solve_any(p, init, o);
    }
    catch (const DivergenceError &)
    {
      SolveResult r;
      r.iterate = init;
      r.status = SolveStatus::LineSearchFailed;
      return r;
    }
  }

  // ---------------------------------------------------------------------------
  // solve

  inline int cmd_solve(const RunConfig &c, const fs::path &out, std::ostream &log)
  {
    prepare_output(c, out);
    const StagewiseProblem p = build_problem(c.model, c.seed);
    require_valid(p);
    const Iterate init = initial_iterate(c.model, p, c.solve, c.seed, c.solver);
    const SolveResult r = solve_any(p, init, c.solver);

    {
      csv::Writer w((out / "trace.csv").string(),
                    {"iter", "merit", "grad_sq", "alpha", "objective", "future_cost", "future_alpha"});
      for (const auto &e : r.trace)
        w.row({std::to_string(e.iter), csv::format(e.merit), csv::format(e.grad_sq), csv::format(e.alpha),
               csv::format(e.objective), csv::format(e.future_cost), csv::format(e.future_alpha)});
    }
    const std::vector<Vector> us = all_controls(p, r.iterate);
    write_trajectory((out / "trajectory.csv").string(), state_names(c.model, p.state_dim()),
                     control_names(p.control_dim()), r.iterate.states, us);

    json summary;
    summary["status"] = to_string(r.status);
    summary["accepted_steps"] = r.accepted_steps();
    summary["iterations"] = r.trace.empty() ? 0 : r.trace.back().iter;
    summary["final_merit"] = r.trace.empty() ? json(nullptr) : number_or_null(r.trace.back().merit);
    if (c.model.is_quadrotor())
      summary["clearance"] = number_or_null(models::quadrotor_clearance(
          c.model.quadrotor, r.iterate.states, us, models::QuadrotorTask{}.obstacle_center,
          c.model.clearance_substeps));
    if (r.degeneracy)
      summary["degeneracy"] = {{"pass", r.degeneracy->pass},
                               {"index", r.degeneracy->index},
                               {"iteration", r.degeneracy->iteration},
                               {"message", r.degeneracy->message}};
    write_json(out / "summary.json", summary);

    log << "solve: " << to_string(r.status) << " after " << r.accepted_steps() << " accepted steps";
    if (!r.trace.empty())
      log << ", merit " << csv::format(r.trace.back().merit);
    log << '\n';
    if (r.degeneracy)
      log << "  degenerate: " << r.degeneracy->message << '\n';
    return exit_code(r.status);
  }

  // ---------------------------------------------------------------------------
  // sweep

  inline sim::ClosedLoopTemplate make_template(const RunConfig &c)
  {
    if (c.model.is_quadrotor())
    {
      if (c.model.t != 0)
        throw ConfigError("key 'model.t': quadrotor sweeps and closed loops start at t = 0");
      SolverOptions plan_options;
      plan_options.gauss_newton = c.solver.gauss_newton;
      return sim::quadrotor_template(c.model.quadrotor, c.model.T, c.model.weights, {}, plan_options,
                                     c.model.clearance_substeps);
    }
    sim::ClosedLoopTemplate tpl;
    tpl.problem = build_problem(c.model, c.seed);
    tpl.initial_guess = initial_iterate(c.model, tpl.problem, c.solve, c.seed, c.solver);
    return tpl;
  }

  inline std::string mu_tag(double mu)
  {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", mu);
    return buf;
  }

  inline int cmd_sweep(const RunConfig &c, const fs::path &out, std::ostream &log)
  {
    prepare_output(c, out);
    const sim::ClosedLoopTemplate tpl = make_template(c);
    const auto entries = sim::open_loop_mu_sweep(tpl, c.sweep.mu_list, c.solver);

    csv::Writer summary((out / "sweep_summary.csv").string(), {"mu", "status", "clearance", "path_file", "message"});
    json meta;
    meta["config"] = config::to_json(c);
    meta["entries"] = json::array();
    int succeeded = 0;
    int first_failure = kOk;
    for (const auto &e : entries)
    {
      std::string file;
      if (e.status == SolveStatus::Converged)
      {
        ++succeeded;
        file = "path_mu_" + mu_tag(e.mu) + ".csv";
        StagewiseProblem p = tpl.problem;
        p.sensitivity = e.mu;
        write_trajectory((out / file).string(), state_names(c.model, p.state_dim()),
                         control_names(p.control_dim()), e.plan.states, all_controls(p, e.plan));
      }
      else if (first_failure == kOk)
        first_failure = exit_code(e.status);
      std::string message = e.message;
      std::replace(message.begin(), message.end(), ',', ';');
      summary.row({csv::format(e.mu), to_string(e.status), csv::format(e.clearance), file, message});
      meta["entries"].push_back({{"mu", e.mu},
                                 {"status", to_string(e.status)},
                                 {"clearance", number_or_null(e.clearance)},
                                 {"path_file", file},
                                 {"message", e.message}});
      log << "sweep: mu = " << mu_tag(e.mu) << " " << to_string(e.status);
      if (std::isfinite(e.clearance))
        log << ", clearance " << csv::format(e.clearance);
      if (!e.message.empty())
        log << " (" << e.message << ")";
      log << '\n';
    }
    meta["succeeded"] = succeeded;
    write_json(out / "sweep_metadata.json", meta);
    return succeeded > 0 ? kOk : first_failure;
  }

  // ---------------------------------------------------------------------------
  // mpc

  inline void write_sim_result(const fs::path &out, const std::string &tag, const config::ModelConfig &m,
                               const sim::SimResult &r, Index nx, Index nu)
  {
    std::vector<std::string> header{"k"};
    std::vector<std::string> names = state_names(m, nx);
    const std::vector<std::string> unames = control_names(nu);
    names.insert(names.end(), unames.begin(), unames.end());
    for (const auto &n : names)
    {
      header.push_back("mean_" + n);
      header.push_back("std_" + n);
    }
    {
      csv::Writer w((out / ("mpc_" + tag + "_timestep.csv")).string(), header);
      for (size_t k = 0; k < r.state_mean.size(); ++k)
      {
        std::vector<std::string> row{std::to_string(k)};
        auto push = [&](const std::vector<Vector> &mean, const std::vector<Vector> &sd, Index dim) {
          for (Index i = 0; i < dim; ++i)
          {
            const bool ok = k < mean.size() && mean[k].size() == dim;
            row.push_back(ok ? csv::format(mean[k](i)) : "");
            row.push_back(ok ? csv::format(sd[k](i)) : "");
          }
        };
        push(r.state_mean, r.state_std, nx);
        push(r.control_mean, r.control_std, nu);
        w.row(row);
      }
    }
    csv::Writer w((out / ("mpc_" + tag + "_rollouts.csv")).string(),
                  {"index", "status", "failure_step", "cost", "clearance", "solver_iterations"});
    for (const auto &rr : r.rollouts)
      w.row({std::to_string(rr.index), rr.failed ? to_string(rr.failure_status) : "converged",
             std::to_string(rr.failure_step), rr.failed ? "" : csv::format(rr.cost),
             rr.failed ? "" : csv::format(rr.clearance), std::to_string(rr.solver_iterations)});
  }

  inline int cmd_mpc(const RunConfig &c, const fs::path &out, std::ostream &log)
  {
    if (!c.model.is_quadrotor())
      throw ConfigError("key 'model.name': mpc requires the quadrotor model");
    prepare_output(c, out);
    const sim::ClosedLoopTemplate tpl = make_template(c);
    json meta;
    meta["config"] = config::to_json(c);
    meta["seed"] = c.seed;
    meta["controllers"] = json::object();
    int code = kOk;
    for (const auto &name : c.mpc.controllers)
    {
      sim::SimConfig sc;
      sc.n_rollouts = c.mpc.n_rollouts;
      sc.mu = name == "game" ? c.model.mu : 0.0;
      sc.seed = c.seed;
      sc.noise_scale = c.mpc.noise_scale;
      sc.cold_start = c.mpc.cold_start;
      sc.threads = c.threads;
      sc.solver = c.solver;
      const auto start = std::chrono::steady_clock::now();
      const sim::SimResult r = sim::run_closed_loop(tpl, sc);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      write_sim_result(out, name, c.model, r, tpl.problem.state_dim(), tpl.problem.control_dim());
      meta["controllers"][name] = {{"mu", sc.mu},
                                   {"n_rollouts", r.n_rollouts},
                                   {"n_failed", r.n_failed},
                                   {"failure_rate_flag", r.failure_rate_flag},
                                   {"mean_clearance", number_or_null(r.mean_clearance)},
                                   {"std_clearance", number_or_null(r.std_clearance)},
                                   {"mean_cost", number_or_null(r.mean_cost)},
                                   {"time_averaged_control_std", number_or_null(r.time_averaged_control_std())}};
      log << "mpc " << name << " (mu = " << mu_tag(sc.mu) << "): " << r.n_rollouts - r.n_failed << "/"
          << r.n_rollouts << " rollouts ok, mean clearance " << csv::format(r.mean_clearance)
          << ", control std " << csv::format(r.time_averaged_control_std()) << ", " << seconds << " s\n";
      if (r.failure_rate_flag)
        log << "  warning: failure rate above 1%\n";
      if (r.n_failed == r.n_rollouts)
        code = kLineSearchFailed;
    }
    write_json(out / "mpc_metadata.json", meta);
    return code;
  }

  // ---------------------------------------------------------------------------
  // check

  /// Stacked-variable views of J, grad J and f_M for finite differencing.
  struct StackedFunctions
  {
    const StagewiseProblem &problem;

    Iterate unstack(const Vector &z) const
    {
      NewtonStep s = unstack_step(z, problem.horizon, problem.current_time, problem.state_dim(),
                                  problem.control_dim());
      return Iterate{std::move(s.p_x), std::move(s.p_u)};
    }
    double J(const Vector &z) const { return eval_J(problem, unstack(z)); }
    Vector grad(const Vector &z) const { return stack(grad_J(problem, unstack(z))); }
    double merit(const Vector &z) const { return stagewise::merit(problem, unstack(z)); }
  };

  /// Derivative of f along d at z: Richardson-extrapolated central difference.
  inline double directional_derivative(const std::function<double(const Vector &)> &f, const Vector &z,
                                       const Vector &d)
  {
    const double scale = std::max(1.0, d.lpNorm<Eigen::Infinity>());
    auto central = [&](double h) { return (f(z + h * d) - f(z - h * d)) / (2.0 * h); };
    const double h = 1e-4 / scale;
    return (4.0 * central(0.5 * h) - central(h)) / 3.0;
  }

  struct CheckResult
  {
    std::uint64_t seed = 0;
    bool skipped = false;
    std::string skip_reason;
    double gradient_rel = std::numeric_limits<double>::quiet_NaN();
    double hessian_abs = std::numeric_limits<double>::quiet_NaN();
    double step_rel = std::numeric_limits<double>::quiet_NaN();
    double descent_rel = std::numeric_limits<double>::quiet_NaN();
    Matrix H;
    Vector g, p_dense, p_stagewise;
  };

  /// Replace every dynamics Jacobian by a slightly wrong one.
  inline void corrupt_jacobians(StagewiseProblem &p)
  {
    for (auto &stage : p.stages)
    {
      const StageModel original = stage;
      stage.dynamics_jacobian = [original](const Vector &x, const Vector &u) {
        DynamicsJacobian j = dynamics_jacobian(original, x, u);
        j.fx(0, 0) += 1e-2;
        return j;
      };
      if (!stage.dynamics_hessian)
        stage.dynamics_hessian = [original](const Vector &x, const Vector &u) {
          return dynamics_hessian(original, x, u);
        };
    }
  }

  inline double relative(const Vector &a, const Vector &b)
  {
    return (a - b).norm() / std::max(b.norm(), 1e-300);
  }

  inline CheckResult check_instance(const StagewiseProblem &p, const Iterate &it, bool gauss_newton)
  {
    CheckResult r;
    const double mu = p.sensitivity;
    const StackedFunctions f{p};
    const Vector z = stack(it);
    try
    {
      const dense::DenseSystem sys = dense::assemble(p, it, gauss_newton);
      r.H = sys.H;
      r.g = sys.g;
      r.p_dense = stack(dense::solve_dense(sys).step);
      r.p_stagewise = stack(compute_step(p, it, StepOptions{gauss_newton}).step);
    }
    catch (const DegenerateGame &e)
    {
      r.skipped = true;
      r.skip_reason = e.what();
      return r;
    }
    catch (const dense::SingularSystem &e)
    {
      r.skipped = true;
      r.skip_reason = e.what();
      return r;
    }
    r.step_rel = relative(r.p_stagewise, r.p_dense);
    if (mu == 0.0)
      return r; // J and its gradient are undefined at mu = 0

    const Vector g_fd = fd::gradient([&](const Vector &v) { return f.J(v); }, z);
    r.gradient_rel = relative(r.g, g_fd);
    if (!gauss_newton)
    {
      const Matrix H_fd = fd::hessian_from_gradient([&](const Vector &v) { return f.grad(v); }, z);
      r.hessian_abs = (r.H - H_fd).cwiseAbs().maxCoeff();
    }
    const double slope = directional_derivative([&](const Vector &v) { return f.merit(v); }, z, r.p_stagewise);
    const double expected = -r.g.squaredNorm();
    r.descent_rel = std::abs(slope - expected) / std::max(std::abs(expected), 1e-300);
    return r;
  }

  /// Largest ratio error / tolerance over the checks that ran, with its label.
  inline std::pair<double, std::string> worst_violation(const CheckResult &r, const config::CheckSection &s)
  {
    std::pair<double, std::string> worst{0.0, ""};
    auto consider = [&](double value, double tol, const char *name) {
      if (std::isnan(value))
        return;
      const double ratio = value / tol;
      if (ratio > worst.first)
        worst = {ratio, name};
    };
    consider(r.gradient_rel, s.gradient_rel_tol, "gradient_rel");
    consider(r.hessian_abs, s.hessian_abs_tol, "hessian_abs");
    consider(r.step_rel, s.step_rel_tol, "step_rel");
    consider(r.descent_rel, s.descent_rel_tol, "descent_rel");
    return worst;
  }

  inline json vector_to_json(const Vector &v) { return std::vector<double>(v.data(), v.data() + v.size()); }

  inline int cmd_check(const RunConfig &c, const fs::path &out, std::ostream &log)
  {
    prepare_output(c, out);
    std::vector<std::uint64_t> seeds = c.check.seeds;
    if (seeds.empty())
      seeds.push_back(c.seed);

    json report = json::array();
    int failures = 0;
    int skipped = 0;
    std::string worst_text;
    double worst_ratio = 0.0;
    for (std::uint64_t seed : seeds)
    {
      StagewiseProblem p = build_problem(c.model, seed);
      require_valid(p);
      Iterate it;
      if (c.model.is_quadrotor())
        it = perturbed(initial_iterate(c.model, p, {}, seed, c.solver), seed, c.check.perturbation);
      else
        it = models::random_iterate(p, seed, c.check.perturbation);
      if (c.check.corrupt_jacobian)
        corrupt_jacobians(p);

      const CheckResult r = check_instance(p, it, c.solver.gauss_newton);
      const auto [ratio, label] = worst_violation(r, c.check);
      const bool ok = r.skipped || ratio <= 1.0;
      json entry = {{"seed", seed},
                    {"mu", p.sensitivity},
                    {"T", p.horizon},
                    {"t", p.current_time},
                    {"skipped", r.skipped},
                    {"pass", ok},
                    {"gradient_rel", number_or_null(r.gradient_rel)},
                    {"hessian_abs", number_or_null(r.hessian_abs)},
                    {"step_rel", number_or_null(r.step_rel)},
                    {"descent_rel", number_or_null(r.descent_rel)}};
      if (r.skipped)
      {
        entry["skip_reason"] = r.skip_reason;
        ++skipped;
      }
      else if (r.H.size() <= 250000)
      {
        json H = config::matrix_to_json(r.H);
        entry["H"] = H;
        entry["g"] = vector_to_json(r.g);
        entry["p_dense"] = vector_to_json(r.p_dense);
        entry["p_stagewise"] = vector_to_json(r.p_stagewise);
      }
      report.push_back(entry);

      log << "check seed " << seed << ": ";
      if (r.skipped)
        log << "skipped (" << r.skip_reason << ")\n";
      else
        log << (ok ? "ok" : "FAIL") << "  grad " << csv::format(r.gradient_rel) << "  hess "
            << csv::format(r.hessian_abs) << "  step " << csv::format(r.step_rel) << "  descent "
            << csv::format(r.descent_rel) << '\n';
      if (!ok)
      {
        ++failures;
        if (ratio > worst_ratio)
        {
          worst_ratio = ratio;
          worst_text = "seed " + std::to_string(seed) + ": " + label + " exceeds its tolerance by a factor of " +
                       csv::format(ratio);
        }
      }
    }
    write_json(out / "check_report.json",
               {{"instances", report}, {"failures", failures}, {"skipped", skipped}});
    if (failures)
    {
      log << "check: " << failures << " of " << seeds.size() << " instances violate tolerances; worst " << worst_text
          << '\n';
      return kCheckFailed;
    }
    log << "check: all " << seeds.size() - static_cast<size_t>(skipped) << " checked instances within tolerances";
    if (skipped)
      log << " (" << skipped << " degenerate instances skipped)";
    log << '\n';
    return kOk;
  }

  // ---------------------------------------------------------------------------
  // bench

  /// Least-squares slope of log(y) against log(x).
  inline double loglog_slope(const std::vector<double> &x, const std::vector<double> &y)
  {
    if (x.size() != y.size() || x.size() < 2)
      return std::numeric_limits<double>::quiet_NaN();
    const auto n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i)
    {
      const double lx = std::log(x[i]), ly = std::log(y[i]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }

  template <class Fn>
  double median_ns(int reps, Fn &&fn)
  {
    std::vector<double> samples;
    for (int i = 0; i < reps; ++i)
    {
      const auto start = std::chrono::steady_clock::now();
      fn();
      samples.push_back(
          static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() -
                                                                                   start)
                                  .count()));
    }
    std::nth_element(samples.begin(), samples.begin() + static_cast<long>(samples.size() / 2), samples.end());
    return samples[samples.size() / 2];
  }

  struct BenchResult
  {
    std::vector<int> horizons;
    std::vector<double> stagewise_ns;
    std::vector<double> dense_ns; // empty unless requested
    double slope = std::numeric_limits<double>::quiet_NaN();
    double dense_slope = std::numeric_limits<double>::quiet_NaN();
  };

  /// Median compute_step time per horizon (and optionally the dense solve).
  inline BenchResult run_bench(const config::ModelConfig &m, const config::BenchSection &b, std::uint64_t seed,
                               bool gauss_newton, std::ostream &log)
  {
    BenchResult r;
    for (int T : b.horizons)
    {
      const StagewiseProblem p = build_problem(m, seed, T, std::min(m.t, T));
      const Iterate it = m.is_quadrotor() ? rollout_iterate(p, models::quadrotor_hover_control(m.quadrotor))
                                          : models::random_iterate(p, seed, 0.01);
      r.horizons.push_back(T);
      r.stagewise_ns.push_back(median_ns(b.reps, [&] { compute_step(p, it, StepOptions{gauss_newton}); }));
      log << "bench T = " << T << ": stagewise " << r.stagewise_ns.back() * 1e-6 << " ms";
      if (b.dense)
      {
        r.dense_ns.push_back(median_ns(b.dense_reps, [&] { dense::dense_step(p, it, gauss_newton); }));
        log << ", dense " << r.dense_ns.back() * 1e-6 << " ms";
      }
      log << '\n';
    }
    const std::vector<double> xs(r.horizons.begin(), r.horizons.end());
    r.slope = loglog_slope(xs, r.stagewise_ns);
    if (b.dense)
      r.dense_slope = loglog_slope(xs, r.dense_ns);
    return r;
  }

  inline int cmd_bench(const RunConfig &c, const fs::path &out, std::ostream &log)
  {
    prepare_output(c, out);
    const BenchResult r = run_bench(c.model, c.bench, c.seed, c.solver.gauss_newton, log);
    std::vector<std::string> header{"T", "median_ns"};
    if (c.bench.dense)
      header.push_back("dense_median_ns");
    csv::Writer w((out / "bench.csv").string(), header);
    for (size_t i = 0; i < r.horizons.size(); ++i)
    {
      std::vector<std::string> row{std::to_string(r.horizons[i]), csv::format(r.stagewise_ns[i])};
      if (c.bench.dense)
        row.push_back(csv::format(r.dense_ns[i]));
      w.row(row);
    }
    json summary = {{"horizons", r.horizons}, {"median_ns", r.stagewise_ns}};
    if (r.horizons.size() >= 2)
    {
      summary["slope"] = r.slope;
      log << "bench: log-log slope " << csv::format(r.slope) << '\n';
      if (c.bench.dense)
      {
        summary["dense_slope"] = r.dense_slope;
        log << "bench: dense log-log slope " << csv::format(r.dense_slope) << '\n';
      }
    }
    if (c.bench.dense)
      summary["dense_median_ns"] = r.dense_ns;
    write_json(out / "bench_summary.json", summary);
    return kOk;
  }

  // ---------------------------------------------------------------------------

  /// Run one command; DegenerateGame escaping a command maps to exit code 2.
  inline int run_command(const std::string &command, const RunConfig &c, const fs::path &out, std::ostream &log)
  {
    try
    {
      if (command == "solve")
        return cmd_solve(c, out, log);
      if (command == "sweep")
        return cmd_sweep(c, out, log);
      if (command == "mpc")
        return cmd_mpc(c, out, log);
      if (command == "check")
        return cmd_check(c, out, log);
      if (command == "bench")
        return cmd_bench(c, out, log);
      throw ConfigError("unknown command '" + command + "'");
    }
    catch (const DegenerateGame &e)
    {
      log << "degenerate game: " << e.what() << '\n';
      return kDegenerate;
    }
  }

} // namespace stagewise::cli
