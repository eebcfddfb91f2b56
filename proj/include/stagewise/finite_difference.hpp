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

// Central-difference derivatives used whenever a model leaves an analytic
// derivative callback empty. These are the lower-accuracy path: expect
// roughly 1e-9 relative error on first derivatives and 1e-6 on second
// derivatives obtained by differencing a finite-difference Jacobian.

#include "stagewise/core.hpp"

#include <cmath>
#include <functional>

namespace stagewise::fd
{

  /// Relative step used for first derivatives.
  inline constexpr double kStep = 1e-6;
  /// Outer step when differencing something that is itself a finite difference.
  inline constexpr double kNestedStep = 1e-4;

  inline double step_for(double component, double relative) { return relative * (1.0 + std::abs(component)); }

  /// Jacobian of a vector map by central differences, one column per input.
  inline Matrix jacobian(const std::function<Vector(const Vector &)> &fun, const Vector &z,
                         double relative = kStep)
  {
    Vector probe = z;
    Matrix jac;
    for (Index j = 0; j < z.size(); ++j)
    {
      const double h = step_for(z(j), relative);
      probe(j) = z(j) + h;
      const Vector plus = fun(probe);
      probe(j) = z(j) - h;
      const Vector minus = fun(probe);
      probe(j) = z(j);
      if (j == 0)
        jac.resize(plus.size(), z.size());
      jac.col(j) = (plus - minus) / (2.0 * h);
    }
    return jac;
  }

  inline Vector gradient(const std::function<double(const Vector &)> &fun, const Vector &z,
                         double relative = kStep)
  {
    Vector probe = z;
    Vector grad(z.size());
    for (Index j = 0; j < z.size(); ++j)
    {
      const double h = step_for(z(j), relative);
      probe(j) = z(j) + h;
      const double plus = fun(probe);
      probe(j) = z(j) - h;
      const double minus = fun(probe);
      probe(j) = z(j);
      grad(j) = (plus - minus) / (2.0 * h);
    }
    return grad;
  }

  /// Second-derivative tensor of a vector map given its Jacobian callback.
  /// Slice i is symmetrized: T[i] = 0.5 (D + D^T) with D_{jl} = d/dz_l J_{ij}.
  inline Tensor3 tensor_from_jacobian(const std::function<Matrix(const Vector &)> &jac, const Vector &z,
                                      double relative = kStep)
  {
    Vector probe = z;
    Tensor3 out;
    for (Index l = 0; l < z.size(); ++l)
    {
      const double h = step_for(z(l), relative);
      probe(l) = z(l) + h;
      const Matrix plus = jac(probe);
      probe(l) = z(l) - h;
      const Matrix minus = jac(probe);
      probe(l) = z(l);
      if (l == 0)
        out = zero_tensor(plus.rows(), z.size(), z.size());
      const Matrix dcol = (plus - minus) / (2.0 * h);
      for (Index i = 0; i < dcol.rows(); ++i)
        out[static_cast<size_t>(i)].col(l) = dcol.row(i).transpose();
    }
    for (auto &slice : out)
      slice = symmetrized(slice);
    return out;
  }

  inline Matrix hessian_from_gradient(const std::function<Vector(const Vector &)> &grad, const Vector &z,
                                      double relative = kStep)
  {
    return symmetrized(jacobian(grad, z, relative));
  }

} // namespace stagewise::fd
