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

// Dense reference for the Newton step: assemble the full Hessian and
// gradient of J over (x_0..x_T, u_t..u_{T-1}) and factor it directly.
// O(T^3); diagnostic and test use only, the solver never calls it.
//
// The second derivatives are written out here independently of the
// augmented-Hessian code used by the stagewise passes.

#include "stagewise/newton_step.hpp"

#include <lapacke.h>

#include <stdexcept>

namespace stagewise::dense
{

  /// Raised when the dense system cannot be factored.
  class SingularSystem : public std::runtime_error
  {
  public:
    using std::runtime_error::runtime_error;
  };

  struct DenseSystem
  {
    int horizon = 0;
    int current_time = 0;
    Index nx = 0;
    Index nu = 0;
    double mu = 0.0;

    /// mu != 0: Hessian and gradient of J over the stacked variable.
    /// mu == 0: Hessian and gradient of the MAP objective over x_0..x_t.
    Matrix H;
    Vector g;

    /// mu == 0 only: equality-constrained quadratic model of the future cost
    /// over z = (p_x_{t+1..T}, p_u_{t..T-1}) given p_{x_t}:
    ///   min 0.5 z'Hz + (gz + Cz p_{x_t})'z  s.t.  A z = b + B p_{x_t}.
    Matrix control_H;
    Vector control_g;
    Matrix control_Cx;
    Matrix control_A;
    Vector control_b;
    Matrix control_B;

    Index size() const { return (horizon + 1) * nx + (horizon - current_time) * nu; }
    Index x_offset(int k) const { return k * nx; }
    Index u_offset(int k) const { return (horizon + 1) * nx + (k - current_time) * nu; }
  };

  /// Solve a symmetric (possibly indefinite) system with Bunch-Kaufman
  /// pivoting. The matrix is taken by value since LAPACK overwrites it.
  inline Vector solve_symmetric_indefinite(Matrix A, Vector b)
  {
    const auto n = static_cast<lapack_int>(A.rows());
    if (n == 0)
      return b;
    std::vector<lapack_int> ipiv(static_cast<size_t>(n));
    const lapack_int info = LAPACKE_dsysv(LAPACK_COL_MAJOR, 'L', n, 1, A.data(), n, ipiv.data(), b.data(), n);
    if (info != 0)
      throw SingularSystem("symmetric indefinite factorization failed (info=" + std::to_string(info) + ")");
    if (!b.allFinite())
      throw SingularSystem("dense solve produced non-finite values");
    return b;
  }

  namespace detail
  {
    inline void add_block(Matrix &H, Index r, Index c, const Matrix &block)
    {
      H.block(r, c, block.rows(), block.cols()) += block;
      if (r != c)
        H.block(c, r, block.cols(), block.rows()) += block.transpose();
    }

    inline Matrix contraction(const Vector &weights, const Tensor3 &tensor, Index rows, Index cols)
    {
      Matrix out = Matrix::Zero(rows, cols);
      for (size_t i = 0; i < tensor.size(); ++i)
        out += weights(static_cast<Index>(i)) * tensor[i];
      return out;
    }

    inline Matrix inverse(const Matrix &spd)
    {
      return Eigen::LLT<Matrix>(spd).solve(Matrix::Identity(spd.rows(), spd.cols()));
    }
  } // namespace detail

  inline DenseSystem assemble(const StagewiseProblem &problem, const Iterate &iterate, bool gauss_newton)
  {
    const int T = problem.horizon;
    const int t = problem.current_time;
    const double mu = problem.sensitivity;
    const Index nx = problem.state_dim();
    const Index nu = problem.control_dim();

    const Residuals r = compute_residuals(problem, iterate);
    const TrajectoryExpansion e = expand(problem, iterate, !gauss_newton);

    DenseSystem sys;
    sys.horizon = T;
    sys.current_time = t;
    sys.nx = nx;
    sys.nu = nu;
    sys.mu = mu;

    const Matrix Pinv = detail::inverse(problem.prior_weight);
    std::vector<Matrix> Qinv(static_cast<size_t>(T + 1));
    for (int j = 1; j <= T; ++j)
      Qinv[static_cast<size_t>(j)] = detail::inverse(problem.process_weight(j));
    std::vector<Matrix> Rinv(static_cast<size_t>(t + 1));
    for (int j = 1; j <= t; ++j)
      Rinv[static_cast<size_t>(j)] = detail::inverse(problem.measurement_weight(j));

    auto meas_curvature = [&](int k) -> Matrix {
      if (gauss_newton)
        return Matrix::Zero(nx, nx);
      return detail::contraction(Rinv[static_cast<size_t>(k)] * r.gamma(k), e.hxx(k), nx, nx);
    };

    if (mu != 0.0)
    {
      // Noise part of J is -N/(2 mu); its derivatives are assembled as those
      // of N and scaled at the end.
      const Index n = sys.size();
      Matrix Hn = Matrix::Zero(n, n);
      Vector gn = Vector::Zero(n);
      Matrix Hc = Matrix::Zero(n, n);
      Vector gc = Vector::Zero(n);

      Hn.block(0, 0, nx, nx) += Pinv;
      gn.segment(0, nx) += Pinv * r.process[0];
      for (int k = 0; k < T; ++k)
      {
        const auto ks = static_cast<size_t>(k);
        const StageExpansion &s = e.stages[ks];
        const Matrix &Qi = Qinv[ks + 1];
        const Vector lam = Qi * r.process[ks + 1];
        const Index xk = sys.x_offset(k);
        const Index xn = sys.x_offset(k + 1);
        const bool free_u = k >= t;
        const Index uk = free_u ? sys.u_offset(k) : 0;

        // N_k = w' Q^-1 w with w = x_{k+1} - f(x_k, u_k)
        // dN/dx_{k+1} = 2 lam, dN/dx_k = -2 f_x' lam, dN/du_k = -2 f_u' lam (halved below)
        gn.segment(xn, nx) += lam;
        gn.segment(xk, nx) -= s.f.fx.transpose() * lam;
        detail::add_block(Hn, xn, xn, Qi);
        detail::add_block(Hn, xk, xk, s.f.fx.transpose() * Qi * s.f.fx);
        detail::add_block(Hn, xk, xn, -s.f.fx.transpose() * Qi);
        if (!gauss_newton)
          detail::add_block(Hn, xk, xk, -detail::contraction(lam, s.f2.fxx, nx, nx));
        if (free_u)
        {
          gn.segment(uk, nu) -= s.f.fu.transpose() * lam;
          detail::add_block(Hn, uk, uk, s.f.fu.transpose() * Qi * s.f.fu);
          detail::add_block(Hn, xk, uk, s.f.fx.transpose() * Qi * s.f.fu);
          detail::add_block(Hn, uk, xn, -s.f.fu.transpose() * Qi);
          if (!gauss_newton)
          {
            detail::add_block(Hn, uk, uk, -detail::contraction(lam, s.f2.fuu, nu, nu));
            detail::add_block(Hn, xk, uk, -detail::contraction(lam, s.f2.fxu, nx, nu));
          }
        }

        gc.segment(xk, nx) += s.l.lx;
        detail::add_block(Hc, xk, xk, s.l.lxx);
        if (free_u)
        {
          gc.segment(uk, nu) += s.l.lu;
          detail::add_block(Hc, uk, uk, s.l.luu);
          detail::add_block(Hc, xk, uk, s.l.lxu);
        }
      }
      for (int j = 1; j <= t; ++j)
      {
        const Index xj = sys.x_offset(j);
        const Matrix &Ri = Rinv[static_cast<size_t>(j)];
        const Matrix &Hj = e.hx(j);
        gn.segment(xj, nx) -= Hj.transpose() * Ri * r.gamma(j);
        detail::add_block(Hn, xj, xj, Hj.transpose() * Ri * Hj - meas_curvature(j));
      }
      const Index xT = sys.x_offset(T);
      gc.segment(xT, nx) += e.terminal.lx;
      detail::add_block(Hc, xT, xT, e.terminal.lxx);

      sys.H = Hc - Hn / mu;
      sys.g = gc - gn / mu;
      return sys;
    }

    // mu == 0: MAP Newton system over x_0 .. x_t.
    const Index ne = (t + 1) * nx;
    sys.H = Matrix::Zero(ne, ne);
    sys.g = Vector::Zero(ne);
    sys.H.block(0, 0, nx, nx) += Pinv;
    sys.g.segment(0, nx) += Pinv * r.process[0];
    for (int k = 0; k < t; ++k)
    {
      const auto ks = static_cast<size_t>(k);
      const StageExpansion &s = e.stages[ks];
      const Matrix &Qi = Qinv[ks + 1];
      const Vector lam = Qi * r.process[ks + 1];
      const Index xk = k * nx;
      const Index xn = (k + 1) * nx;
      sys.g.segment(xn, nx) += lam;
      sys.g.segment(xk, nx) -= s.f.fx.transpose() * lam;
      detail::add_block(sys.H, xn, xn, Qi);
      detail::add_block(sys.H, xk, xk, s.f.fx.transpose() * Qi * s.f.fx);
      detail::add_block(sys.H, xk, xn, -s.f.fx.transpose() * Qi);
      if (!gauss_newton)
        detail::add_block(sys.H, xk, xk, -detail::contraction(lam, s.f2.fxx, nx, nx));
    }
    for (int j = 1; j <= t; ++j)
    {
      const Index xj = j * nx;
      const Matrix &Ri = Rinv[static_cast<size_t>(j)];
      const Matrix &Hj = e.hx(j);
      sys.g.segment(xj, nx) -= Hj.transpose() * Ri * r.gamma(j);
      detail::add_block(sys.H, xj, xj, Hj.transpose() * Ri * Hj - meas_curvature(j));
    }

    // Future: z = (p_x_{t+1} .. p_x_T, p_u_t .. p_u_{T-1}).
    const int nf = T - t;
    const Index nz = nf * (nx + nu);
    auto zx = [&](int k) { return static_cast<Index>(k - t - 1) * nx; };
    auto zu = [&](int k) { return static_cast<Index>(nf) * nx + static_cast<Index>(k - t) * nu; };
    sys.control_H = Matrix::Zero(nz, nz);
    sys.control_g = Vector::Zero(nz);
    sys.control_Cx = Matrix::Zero(nz, nx);
    sys.control_A = Matrix::Zero(nf * nx, nz);
    sys.control_b = Vector::Zero(nf * nx);
    sys.control_B = Matrix::Zero(nf * nx, nx);
    for (int k = t; k < T; ++k)
    {
      const StageExpansion &s = e.stages[static_cast<size_t>(k)];
      const Index row = static_cast<Index>(k - t) * nx;
      sys.control_g.segment(zu(k), nu) += s.l.lu;
      detail::add_block(sys.control_H, zu(k), zu(k), s.l.luu);
      if (k > t)
      {
        sys.control_g.segment(zx(k), nx) += s.l.lx;
        detail::add_block(sys.control_H, zx(k), zx(k), s.l.lxx);
        detail::add_block(sys.control_H, zx(k), zu(k), s.l.lxu);
        sys.control_A.block(row, zx(k), nx, nx) = -s.f.fx;
      }
      else
      {
        sys.control_Cx.block(zu(k), 0, nu, nx) = s.l.lxu.transpose();
        sys.control_B.block(0, 0, nx, nx) = s.f.fx;
      }
      sys.control_A.block(row, zx(k + 1), nx, nx) = Matrix::Identity(nx, nx);
      sys.control_A.block(row, zu(k), nx, nu) = -s.f.fu;
      sys.control_b.segment(row, nx) = -r.process[static_cast<size_t>(k + 1)];
    }
    if (nf > 0)
    {
      sys.control_g.segment(zx(T), nx) += e.terminal.lx;
      detail::add_block(sys.control_H, zx(T), zx(T), e.terminal.lxx);
    }
    return sys;
  }

  struct DenseSolution
  {
    NewtonStep step;
    double relative_residual = 0.0; // |H p + g| / |g| of the (first) system
  };

  /// Newton direction oriented like compute_step: H p = -g.
  inline DenseSolution solve_dense(const DenseSystem &sys)
  {
    DenseSolution out;
    const Index nx = sys.nx;
    const Index nu = sys.nu;
    const int T = sys.horizon;
    const int t = sys.current_time;

    const Vector p = solve_symmetric_indefinite(sys.H, -sys.g);
    const double gnorm = sys.g.norm();
    out.relative_residual = (sys.H * p + sys.g).norm() / (gnorm > 0.0 ? gnorm : 1.0);

    if (sys.mu != 0.0)
    {
      out.step = unstack_step(p, T, t, nx, nu);
      return out;
    }

    for (int k = 0; k <= t; ++k)
      out.step.p_x.push_back(p.segment(k * nx, nx));
    const Vector p_x_t = out.step.p_x.back();
    const int nf = T - t;
    if (nf == 0)
      return out;

    // KKT: [H A'; A 0] [z; nu] = [-(g + Cx p_t); b + B p_t]
    const Index nz = sys.control_H.rows();
    const Index nc = sys.control_A.rows();
    Matrix kkt = Matrix::Zero(nz + nc, nz + nc);
    kkt.topLeftCorner(nz, nz) = sys.control_H;
    kkt.bottomLeftCorner(nc, nz) = sys.control_A;
    kkt.topRightCorner(nz, nc) = sys.control_A.transpose();
    Vector rhs(nz + nc);
    rhs.head(nz) = -(sys.control_g + sys.control_Cx * p_x_t);
    rhs.tail(nc) = sys.control_b + sys.control_B * p_x_t;
    const Vector z = solve_symmetric_indefinite(kkt, rhs);
    for (int k = t + 1; k <= T; ++k)
      out.step.p_x.push_back(z.segment(static_cast<Index>(k - t - 1) * nx, nx));
    for (int k = t; k < T; ++k)
      out.step.p_u.push_back(z.segment(static_cast<Index>(nf) * nx + static_cast<Index>(k - t) * nu, nu));
    return out;
  }

  inline NewtonStep dense_step(const StagewiseProblem &problem, const Iterate &iterate, bool gauss_newton = false)
  {
    return solve_dense(assemble(problem, iterate, gauss_newton)).step;
  }

} // namespace stagewise::dense
