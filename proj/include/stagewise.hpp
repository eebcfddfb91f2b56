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

#include "stagewise/core.hpp"
#include "stagewise/csv.hpp"
#include "stagewise/dense_oracle.hpp"
#include "stagewise/expansion.hpp"
#include "stagewise/finite_difference.hpp"
#include "stagewise/models.hpp"
#include "stagewise/mpc_sim.hpp"
#include "stagewise/newton_step.hpp"
#include "stagewise/objective.hpp"
#include "stagewise/problem.hpp"
#include "stagewise/solver.hpp"
