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

#include "stagewise/models.hpp"
#include "stagewise/newton_step.hpp"

#include <optional>

namespace fixtures
{

  using namespace stagewise;

  struct Instance
  {
    StagewiseProblem problem;
    Iterate iterate;
  };

  /// Random smooth instance whose Newton step is well defined at a nearby
  /// iterate; nullopt when the game is degenerate there.
  inline std::optional<Instance> well_posed(const models::RandomInstanceOptions &o, double perturbation = 0.01)
  {
    Instance in{models::random_smooth_problem(o), {}};
    in.iterate = models::random_iterate(in.problem, o.seed, perturbation);
    try
    {
      compute_step(in.problem, in.iterate);
    }
    catch (const DegenerateGame &)
    {
      return std::nullopt;
    }
    return in;
  }

  inline models::RandomInstanceOptions options(std::uint64_t seed, int T, int t, double mu, Index nx = 3,
                                               Index nu = 2, Index ny = 2, double nonlinearity = 0.3)
  {
    models::RandomInstanceOptions o;
    o.seed = seed;
    o.T = T;
    o.t = t;
    o.mu = mu;
    o.nx = nx;
    o.nu = nu;
    o.ny = ny;
    o.nonlinearity = nonlinearity;
    return o;
  }

  inline double rel_err(const Vector &a, const Vector &b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

} // namespace fixtures
