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

// Built-in benchmark problems: a planar quadrotor flying past an obstacle,
// seeded linear-quadratic instances, and seeded smooth nonlinear instances
// used by the property tests.

#include "stagewise/problem.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

namespace stagewise::models
{

  // ---------------------------------------------------------------------------
  // Planar quadrotor

  struct PlanarQuadrotorParams
  {
    double mass = 1.0;     // kg
    double inertia = 0.1;  // kg m^2
    double arm = 0.15;     // m
    double gravity = 9.81; // m/s^2
    double dt = 0.05;      // s
    int rk4_substeps = 1;

    double hover_thrust() const { return 0.5 * mass * gravity; }
    void check() const
    {
      if (!(mass > 0 && inertia > 0 && arm > 0 && gravity > 0 && dt > 0 && rk4_substeps >= 1))
        throw ConfigError("quadrotor parameters must all be positive");
    }
  };

  /// Continuous-time planar quadrotor, state (p_x, p_y, theta, vx, vy, omega),
  /// control (u_1, u_2) = rotor forces, discretized with classical RK4.
  class PlanarQuadrotor
  {
  public:
    static constexpr Index kStates = 6;
    static constexpr Index kControls = 2;

    explicit PlanarQuadrotor(PlanarQuadrotorParams params) : p_(params) { p_.check(); }

    const PlanarQuadrotorParams &params() const { return p_; }

    Vector derivative(const Vector &x, const Vector &u) const
    {
      const double thrust = u(0) + u(1);
      Vector dx(kStates);
      dx << x(3), x(4), x(5), -thrust * std::sin(x(2)) / p_.mass,
          thrust * std::cos(x(2)) / p_.mass - p_.gravity, p_.arm * (u(0) - u(1)) / p_.inertia;
      return dx;
    }

    void derivative_jacobian(const Vector &x, const Vector &u, Matrix &Fx, Matrix &Fu) const
    {
      const double thrust = u(0) + u(1);
      const double s = std::sin(x(2));
      const double c = std::cos(x(2));
      Fx = Matrix::Zero(kStates, kStates);
      Fx(0, 3) = 1.0;
      Fx(1, 4) = 1.0;
      Fx(2, 5) = 1.0;
      Fx(3, 2) = -thrust * c / p_.mass;
      Fx(4, 2) = -thrust * s / p_.mass;
      Fu = Matrix::Zero(kStates, kControls);
      Fu(3, 0) = Fu(3, 1) = -s / p_.mass;
      Fu(4, 0) = Fu(4, 1) = c / p_.mass;
      Fu(5, 0) = p_.arm / p_.inertia;
      Fu(5, 1) = -p_.arm / p_.inertia;
    }

    Vector step(const Vector &x, const Vector &u) const
    {
      const double h = p_.dt / p_.rk4_substeps;
      Vector z = x;
      for (int i = 0; i < p_.rk4_substeps; ++i)
      {
        const Vector k1 = derivative(z, u);
        const Vector k2 = derivative(z + 0.5 * h * k1, u);
        const Vector k3 = derivative(z + 0.5 * h * k2, u);
        const Vector k4 = derivative(z + h * k3, u);
        z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      return z;
    }

    /// Exact Jacobians of step() by the chain rule through the RK4 stages.
    DynamicsJacobian step_jacobian(const Vector &x, const Vector &u) const
    {
      const double h = p_.dt / p_.rk4_substeps;
      const Matrix I = Matrix::Identity(kStates, kStates);
      DynamicsJacobian out{I, Matrix::Zero(kStates, kControls)};
      Vector z = x;
      Matrix Fx, Fu;
      for (int i = 0; i < p_.rk4_substeps; ++i)
      {
        const Vector k1 = derivative(z, u);
        derivative_jacobian(z, u, Fx, Fu);
        const Matrix J1x = Fx, J1u = Fu;

        const Vector z2 = z + 0.5 * h * k1;
        const Vector k2 = derivative(z2, u);
        derivative_jacobian(z2, u, Fx, Fu);
        const Matrix J2x = Fx * (I + 0.5 * h * J1x);
        const Matrix J2u = Fx * (0.5 * h * J1u) + Fu;

        const Vector z3 = z + 0.5 * h * k2;
        const Vector k3 = derivative(z3, u);
        derivative_jacobian(z3, u, Fx, Fu);
        const Matrix J3x = Fx * (I + 0.5 * h * J2x);
        const Matrix J3u = Fx * (0.5 * h * J2u) + Fu;

        const Vector z4 = z + h * k3;
        const Vector k4 = derivative(z4, u);
        derivative_jacobian(z4, u, Fx, Fu);
        const Matrix J4x = Fx * (I + h * J3x);
        const Matrix J4u = Fx * (h * J3u) + Fu;

        const Matrix A = I + (h / 6.0) * (J1x + 2.0 * J2x + 2.0 * J3x + J4x);
        const Matrix B = (h / 6.0) * (J1u + 2.0 * J2u + 2.0 * J3u + J4u);
        out.fu = A * out.fu + B;
        out.fx = A * out.fx;
        z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      return out;
    }

  private:
    PlanarQuadrotorParams p_;
  };

  /// Obstacle, goal and weights of the quadrotor task.
  struct QuadrotorTask
  {
    Vector obstacle_center = (Vector(2) << 1.0, -0.1).finished();
    double obstacle_height = 0.3;
    double obstacle_px_rate = 10.0;
    double obstacle_py_rate = 0.5;
    double control_weight = 0.005;
    double running_state_weight = 0.05;
    Vector target = (Vector(6) << 2.0, 0.0, 0.0, 0.0, 0.0, 0.0).finished();
    Vector state_scaling = (Vector(6) << 100.0, 100.0, 100.0, 1.0, 1.0, 1.0).finished(); // diag(L)
  };

  struct QuadrotorWeights
  {
    Matrix prior = 1e-5 * Matrix::Identity(6, 6);
    Matrix process = 1e-5 * Matrix::Identity(6, 6);
    Matrix measurement = 1e-4 * Vector((Vector(3) << 1.0, 1.0, 0.01).finished()).asDiagonal();
  };

  /// Running cost of the quadrotor task and its analytic derivatives.
  inline double quadrotor_running_cost(const QuadrotorTask &task, double hover, const Vector &x, const Vector &u)
  {
    const double dx = x(0) - task.obstacle_center(0);
    const double dy = x(1) - task.obstacle_center(1);
    const Vector du = u - Vector::Constant(2, hover);
    const Vector dz = x - task.target;
    return task.obstacle_height * std::exp(-task.obstacle_px_rate * dx * dx - task.obstacle_py_rate * dy * dy) +
           task.control_weight * du.squaredNorm() +
           task.running_state_weight * dz.dot(task.state_scaling.cwiseProduct(dz));
  }

  inline CostDerivatives quadrotor_running_cost_derivatives(const QuadrotorTask &task, double hover, const Vector &x,
                                                            const Vector &u)
  {
    const double dx = x(0) - task.obstacle_center(0);
    const double dy = x(1) - task.obstacle_center(1);
    const double bump =
        task.obstacle_height * std::exp(-task.obstacle_px_rate * dx * dx - task.obstacle_py_rate * dy * dy);
    // bump = h exp(phi), grad = bump grad(phi), hess = bump (grad(phi) grad(phi)' + hess(phi))
    const Eigen::Vector2d dphi(-2.0 * task.obstacle_px_rate * dx, -2.0 * task.obstacle_py_rate * dy);
    Eigen::Matrix2d d2phi = Eigen::Matrix2d::Zero();
    d2phi(0, 0) = -2.0 * task.obstacle_px_rate;
    d2phi(1, 1) = -2.0 * task.obstacle_py_rate;

    CostDerivatives d;
    const Vector dz = x - task.target;
    d.lx = 2.0 * task.running_state_weight * task.state_scaling.cwiseProduct(dz);
    d.lx.head<2>() += bump * dphi;
    d.lxx = 2.0 * task.running_state_weight * Matrix(task.state_scaling.asDiagonal());
    d.lxx.topLeftCorner<2, 2>() += bump * (dphi * dphi.transpose() + d2phi);
    d.lu = 2.0 * task.control_weight * (u - Vector::Constant(2, hover));
    d.luu = 2.0 * task.control_weight * Matrix::Identity(2, 2);
    d.lxu = Matrix::Zero(6, 2);
    return d;
  }

  inline MeasurementModel quadrotor_measurement()
  {
    MeasurementModel m;
    m.ny = 3;
    m.h = [](const Vector &x) { return Vector(x.head(3)); };
    m.jacobian = [](const Vector &) {
      Matrix H = Matrix::Zero(3, 6);
      H.leftCols(3).setIdentity();
      return H;
    };
    m.hessian = [](const Vector &) { return zero_tensor(3, 6, 6); };
    return m;
  }

  inline StageModel quadrotor_stage(const PlanarQuadrotorParams &params, const QuadrotorTask &task = {})
  {
    auto quad = std::make_shared<const PlanarQuadrotor>(params);
    const double hover = params.hover_thrust();
    StageModel s;
    s.nx = PlanarQuadrotor::kStates;
    s.nu = PlanarQuadrotor::kControls;
    s.dynamics = [quad](const Vector &x, const Vector &u) { return quad->step(x, u); };
    s.dynamics_jacobian = [quad](const Vector &x, const Vector &u) { return quad->step_jacobian(x, u); };
    // Second derivatives come from finite differences of the exact Jacobian.
    s.cost = [task, hover](const Vector &x, const Vector &u) { return quadrotor_running_cost(task, hover, x, u); };
    s.cost_derivatives = [task, hover](const Vector &x, const Vector &u) {
      return quadrotor_running_cost_derivatives(task, hover, x, u);
    };
    s.measurement = quadrotor_measurement();
    return s;
  }

  inline TerminalModel quadrotor_terminal(const QuadrotorTask &task = {})
  {
    TerminalModel term;
    term.nx = 6;
    term.cost = [task](const Vector &x) {
      const Vector dz = x - task.target;
      return dz.dot(task.state_scaling.cwiseProduct(dz));
    };
    term.cost_derivatives = [task](const Vector &x) {
      TerminalCostDerivatives d;
      d.lx = 2.0 * task.state_scaling.cwiseProduct(x - task.target);
      d.lxx = 2.0 * Matrix(task.state_scaling.asDiagonal());
      return d;
    };
    term.measurement = quadrotor_measurement();
    return term;
  }

  /// Quadrotor game with an explicit measurement and control history.
  inline StagewiseProblem quadrotor_problem(const PlanarQuadrotorParams &params, double mu, int T,
                                            const std::vector<Vector> &measurements,
                                            const std::vector<Vector> &past_controls,
                                            const QuadrotorWeights &weights = {}, const QuadrotorTask &task = {})
  {
    params.check();
    StagewiseProblem p;
    p.horizon = T;
    p.current_time = static_cast<int>(measurements.size());
    p.sensitivity = mu;
    p.prior_mean = Vector::Zero(6);
    p.prior_weight = weights.prior;
    p.process_weights.assign(static_cast<size_t>(T), weights.process);
    p.measurement_weights.assign(measurements.size(), weights.measurement);
    p.measurements = measurements;
    p.past_controls = past_controls;
    p.stages.assign(static_cast<size_t>(T), quadrotor_stage(params, task));
    p.terminal = quadrotor_terminal(task);
    return p;
  }

  /// Quadrotor game at split time t. The first t controls are the hover
  /// thrust and the t measurements are read off the undisturbed rollout.
  inline StagewiseProblem quadrotor_problem(const PlanarQuadrotorParams &params, double mu, int T = 60, int t = 0,
                                            const QuadrotorWeights &weights = {}, const QuadrotorTask &task = {})
  {
    if (t < 0 || t > T)
      throw ConfigError("quadrotor: split time outside [0, T]");
    const PlanarQuadrotor quad(params);
    const Vector hover = Vector::Constant(2, params.hover_thrust());
    std::vector<Vector> controls(static_cast<size_t>(t), hover);
    std::vector<Vector> ys;
    Vector x = Vector::Zero(6);
    for (int j = 1; j <= t; ++j)
    {
      x = quad.step(x, hover);
      ys.push_back(x.head(3));
    }
    return quadrotor_problem(params, mu, T, ys, controls, weights, task);
  }

  inline Vector quadrotor_hover_control(const PlanarQuadrotorParams &params)
  {
    return Vector::Constant(2, params.hover_thrust());
  }

  /// Minimum distance of the quadrotor to `center` over continuous time.
  /// Between samples the state follows the undisturbed dynamics under the
  /// held control, evaluated at `substeps` points per interval; disturbances
  /// act as jumps at the sample instants.
  inline double quadrotor_clearance(const PlanarQuadrotorParams &params, const std::vector<Vector> &states,
                                    const std::vector<Vector> &controls, const Vector &center, int substeps = 20)
  {
    if (substeps < 1)
      throw ConfigError("clearance substeps must be >= 1");
    PlanarQuadrotorParams fine = params;
    fine.dt = params.dt / substeps;
    fine.rk4_substeps = 1;
    const PlanarQuadrotor quad(fine);
    auto distance = [&](const Vector &x) { return std::hypot(x(0) - center(0), x(1) - center(1)); };
    double best = distance(states.back());
    for (size_t k = 0; k < controls.size() && k + 1 < states.size(); ++k)
    {
      Vector z = states[k];
      best = std::min(best, distance(z));
      for (int s = 1; s < substeps; ++s)
      {
        z = quad.step(z, controls[k]);
        best = std::min(best, distance(z));
      }
    }
    return best;
  }

  /// Clearance of a planned iterate (controls before t taken from the problem).
  inline double quadrotor_clearance(const PlanarQuadrotorParams &params, const StagewiseProblem &problem,
                                    const Iterate &iterate, const QuadrotorTask &task = {}, int substeps = 20)
  {
    std::vector<Vector> controls;
    for (int k = 0; k < problem.horizon; ++k)
      controls.push_back(applied_control(problem, iterate, k));
    return quadrotor_clearance(params, iterate.states, controls, task.obstacle_center, substeps);
  }

  // ---------------------------------------------------------------------------
  // Seeded random instances

  struct RandomInstanceOptions
  {
    std::uint64_t seed = 0;
    Index nx = 3;
    Index nu = 2;
    Index ny = 2;
    int T = 6;
    int t = 3;
    double mu = 0.3;
    /// Amplitude of the sine and quadratic terms; 0 gives a linear-quadratic game.
    double nonlinearity = 0.3;
    /// Drop all running and terminal costs (pure estimation problem).
    bool zero_cost = false;
  };

  namespace detail
  {
    class Draw
    {
    public:
      explicit Draw(std::uint64_t seed) : rng_(seed) {}

      Matrix gaussian(Index rows, Index cols, double scale = 1.0)
      {
        Matrix m(rows, cols);
        for (Index j = 0; j < cols; ++j)
          for (Index i = 0; i < rows; ++i)
            m(i, j) = scale * normal_(rng_);
        return m;
      }
      Vector gaussian(Index n, double scale = 1.0) { return gaussian(n, 1, scale); }

      /// scale * (G G'/n + floor I), well conditioned.
      Matrix spd(Index n, double scale, double floor = 0.5)
      {
        const Matrix g = gaussian(n, n);
        return scale * (g * g.transpose() / static_cast<double>(n) + floor * Matrix::Identity(n, n));
      }

      /// Random matrix rescaled to the given spectral radius.
      Matrix stable(Index n, double radius)
      {
        const Matrix a = gaussian(n, n);
        const double rho = a.eigenvalues().cwiseAbs().maxCoeff();
        return rho > 0 ? Matrix(a * (radius / rho)) : a;
      }

    private:
      std::mt19937_64 rng_;
      std::normal_distribution<double> normal_{0.0, 1.0};
    };

    /// Quadratic-plus-sine model shared by every stage of a random instance.
    struct SmoothModel
    {
      Index nx, nu, ny;
      double s; // nonlinearity amplitude
      Matrix A, B, D, E, F;
      Vector c;
      Matrix C;
      std::vector<Matrix> M; // measurement curvature per output
      Matrix W, Ru, N;       // cost Hessian blocks
      Vector q, r;
      Vector a, b; // cost sine direction
      Matrix WT;
      Vector qT;
    };

    inline std::shared_ptr<const SmoothModel> draw_smooth_model(const RandomInstanceOptions &o, Draw &draw)
    {
      auto m = std::make_shared<SmoothModel>();
      m->nx = o.nx;
      m->nu = o.nu;
      m->ny = o.ny;
      m->s = o.nonlinearity;
      m->A = draw.stable(o.nx, 0.9);
      m->B = draw.gaussian(o.nx, o.nu, 0.5);
      m->D = draw.gaussian(o.nx, o.nx, 0.5);
      m->E = draw.gaussian(o.nx, o.nx, 0.7);
      m->F = draw.gaussian(o.nx, o.nu, 0.7);
      m->c = draw.gaussian(o.nx);
      m->C = draw.gaussian(o.ny, o.nx);
      for (Index i = 0; i < o.ny; ++i)
      {
        const Matrix g = draw.gaussian(o.nx, o.nx, 0.3);
        m->M.push_back(g + g.transpose());
      }
      const double cost_scale = o.zero_cost ? 0.0 : 1.0;
      m->W = cost_scale * draw.spd(o.nx, 0.1);
      m->Ru = cost_scale * draw.spd(o.nu, 0.5);
      m->N = cost_scale * draw.gaussian(o.nx, o.nu, 0.05);
      m->q = cost_scale * draw.gaussian(o.nx, 0.5);
      m->r = cost_scale * draw.gaussian(o.nu, 0.5);
      m->a = cost_scale * draw.gaussian(o.nx, 0.5);
      m->b = cost_scale * draw.gaussian(o.nu, 0.5);
      m->WT = cost_scale * draw.spd(o.nx, 0.1);
      m->qT = cost_scale * draw.gaussian(o.nx, 0.5);
      return m;
    }

    inline StageModel smooth_stage(std::shared_ptr<const SmoothModel> m)
    {
      StageModel st;
      st.nx = m->nx;
      st.nu = m->nu;
      st.dynamics = [m](const Vector &x, const Vector &u) {
        const Vector z = m->E * x + m->F * u + m->c;
        return Vector(m->A * x + m->B * u + m->s * (m->D * z.array().sin().matrix()));
      };
      st.dynamics_jacobian = [m](const Vector &x, const Vector &u) {
        const Vector z = m->E * x + m->F * u + m->c;
        const Matrix Dc = m->s * (m->D * z.array().cos().matrix().asDiagonal());
        return DynamicsJacobian{m->A + Dc * m->E, m->B + Dc * m->F};
      };
      st.dynamics_hessian = [m](const Vector &x, const Vector &u) {
        const Vector z = m->E * x + m->F * u + m->c;
        const Vector sz = z.array().sin().matrix();
        DynamicsHessian h;
        for (Index i = 0; i < m->nx; ++i)
        {
          // f_i = ... + s sum_j D_ij sin(z_j); d2 = -s sum_j D_ij sin(z_j) (e_j, f_j)(e_j, f_j)'
          const Vector weight = -m->s * m->D.row(i).transpose().cwiseProduct(sz);
          h.fxx.push_back(m->E.transpose() * weight.asDiagonal() * m->E);
          h.fxu.push_back(m->E.transpose() * weight.asDiagonal() * m->F);
          h.fuu.push_back(m->F.transpose() * weight.asDiagonal() * m->F);
        }
        return h;
      };
      st.cost = [m](const Vector &x, const Vector &u) {
        return 0.5 * x.dot(m->W * x) + 0.5 * u.dot(m->Ru * u) + x.dot(m->N * u) + m->q.dot(x) + m->r.dot(u) +
               0.1 * m->s * std::sin(m->a.dot(x) + m->b.dot(u));
      };
      st.cost_derivatives = [m](const Vector &x, const Vector &u) {
        const double z = m->a.dot(x) + m->b.dot(u);
        const double c1 = 0.1 * m->s * std::cos(z);
        const double c2 = -0.1 * m->s * std::sin(z);
        CostDerivatives d;
        d.lx = m->W * x + m->N * u + m->q + c1 * m->a;
        d.lu = m->Ru * u + m->N.transpose() * x + m->r + c1 * m->b;
        d.lxx = m->W + c2 * m->a * m->a.transpose();
        d.lxu = m->N + c2 * m->a * m->b.transpose();
        d.luu = m->Ru + c2 * m->b * m->b.transpose();
        return d;
      };
      MeasurementModel meas;
      meas.ny = m->ny;
      meas.h = [m](const Vector &x) {
        Vector y = m->C * x;
        for (Index i = 0; i < m->ny; ++i)
          y(i) += 0.5 * m->s * x.dot(m->M[static_cast<size_t>(i)] * x);
        return y;
      };
      meas.jacobian = [m](const Vector &x) {
        Matrix H = m->C;
        for (Index i = 0; i < m->ny; ++i)
          H.row(i) += m->s * (m->M[static_cast<size_t>(i)] * x).transpose();
        return H;
      };
      meas.hessian = [m](const Vector &) {
        Tensor3 t;
        for (const auto &Mi : m->M)
          t.push_back(m->s * Mi);
        return t;
      };
      st.measurement = meas;
      return st;
    }

    inline TerminalModel smooth_terminal(std::shared_ptr<const SmoothModel> m, const MeasurementModel &meas)
    {
      TerminalModel term;
      term.nx = m->nx;
      term.cost = [m](const Vector &x) { return 0.5 * x.dot(m->WT * x) + m->qT.dot(x); };
      term.cost_derivatives = [m](const Vector &x) { return TerminalCostDerivatives{m->WT * x + m->qT, m->WT}; };
      term.measurement = meas;
      return term;
    }
  } // namespace detail

  /// Seeded smooth game: linear dynamics plus a sine term, linear plus
  /// quadratic measurements, quadratic plus sine cost. All derivatives are
  /// analytic. nonlinearity = 0 gives an exactly linear-quadratic instance.
  inline StagewiseProblem random_smooth_problem(const RandomInstanceOptions &o)
  {
    if (o.nx < 1 || o.nu < 1 || o.ny < 1 || o.T < 1 || o.t < 0 || o.t > o.T)
      throw ConfigError("random instance: dimensions must be >= 1 and 0 <= t <= T");
    detail::Draw draw(o.seed);
    const auto model = detail::draw_smooth_model(o, draw);

    StagewiseProblem p;
    p.horizon = o.T;
    p.current_time = o.t;
    p.sensitivity = o.mu;
    p.prior_mean = draw.gaussian(o.nx, 0.5);
    p.prior_weight = draw.spd(o.nx, 0.5);
    for (int j = 1; j <= o.T; ++j)
      p.process_weights.push_back(draw.spd(o.nx, 0.3));
    for (int j = 1; j <= o.t; ++j)
    {
      p.measurement_weights.push_back(draw.spd(o.ny, 0.5));
      p.past_controls.push_back(draw.gaussian(o.nu, 0.5));
    }
    const StageModel stage = detail::smooth_stage(model);
    p.stages.assign(static_cast<size_t>(o.T), stage);
    p.terminal = detail::smooth_terminal(model, stage.measurement);

    // Measurements of the undisturbed past trajectory plus noise.
    const std::vector<Vector> xs = rollout(p, p.prior_mean, p.past_controls);
    for (int j = 1; j <= o.t; ++j)
      p.measurements.push_back(stage.measurement.h(xs[static_cast<size_t>(j)]) + draw.gaussian(o.ny, 0.2));
    return p;
  }

  /// Seeded linear-quadratic instance: stable A (spectral radius 0.9),
  /// linear measurements, quadratic costs.
  inline StagewiseProblem lq_problem(std::uint64_t seed, Index nx, Index nu, Index ny, int T, int t, double mu,
                                     bool zero_cost = false)
  {
    RandomInstanceOptions o;
    o.seed = seed;
    o.nx = nx;
    o.nu = nu;
    o.ny = ny;
    o.T = T;
    o.t = t;
    o.mu = mu;
    o.nonlinearity = 0.0;
    o.zero_cost = zero_cost;
    return random_smooth_problem(o);
  }

  /// Iterate near the zero-disturbance rollout: random future controls,
  /// then every state and control perturbed by Gaussian noise of the given
  /// size, so residuals are O(perturbation).
  inline Iterate random_iterate(const StagewiseProblem &problem, std::uint64_t seed, double perturbation = 0.01)
  {
    detail::Draw draw(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<Vector> future;
    for (int k = problem.current_time; k < problem.horizon; ++k)
      future.push_back(draw.gaussian(problem.control_dim(), 0.5));
    Iterate it = rollout_iterate(problem, future);
    for (auto &x : it.states)
      x += draw.gaussian(problem.state_dim(), perturbation);
    for (auto &u : it.controls)
      u += draw.gaussian(problem.control_dim(), perturbation);
    return it;
  }

} // namespace stagewise::models
