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

// Strict JSON run configuration for the command-line tool. Every key is
// optional; unknown keys and wrongly typed values raise ConfigError naming
// the offending key.

#include "stagewise/models.hpp"
#include "stagewise/solver.hpp"

#include "json.hpp"

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace stagewise::config
{

  using json = nlohmann::ordered_json;

  struct ModelConfig
  {
    std::string name = "quadrotor"; // quadrotor | lq | random_smooth
    int T = 60;
    int t = 0;
    double mu = 6.0;

    // quadrotor
    models::PlanarQuadrotorParams quadrotor;
    models::QuadrotorWeights weights;
    int clearance_substeps = 20;

    // lq / random_smooth
    Index nx = 3;
    Index nu = 2;
    Index ny = 2;
    double nonlinearity = 0.3; // random_smooth only
    bool zero_cost = false;

    bool is_quadrotor() const { return name == "quadrotor"; }
  };

  struct SolveSection
  {
    /// default: neutral plan (quadrotor) or perturbed rollout (random models);
    /// rollout: undisturbed rollout of hover / zero controls; random: perturbed rollout.
    std::string initial = "default";
    double perturbation = 0.01;
  };

  struct SweepSection
  {
    std::vector<double> mu_list{-14.0, -6.0, 0.0, 3.0, 6.0};
  };

  struct MpcSection
  {
    int n_rollouts = 100; // the game controller uses model.mu
    double noise_scale = 1.0;
    bool cold_start = false;
    std::vector<std::string> controllers{"game", "neutral"};
  };

  struct CheckSection
  {
    std::vector<std::uint64_t> seeds; // empty: the run seed only
    double perturbation = 0.01;
    bool corrupt_jacobian = false; // fault injection for testing the checker
    double gradient_rel_tol = 1e-5;
    double hessian_abs_tol = 1e-4;
    double step_rel_tol = 1e-8;
    double descent_rel_tol = 1e-6;
  };

  struct BenchSection
  {
    std::vector<int> horizons{50, 100, 200, 400};
    int reps = 20;
    bool dense = false;
    int dense_reps = 20;
  };

  struct RunConfig
  {
    ModelConfig model;
    SolverOptions solver;
    std::uint64_t seed = 0;
    std::string output_dir;
    int threads = 0;
    SolveSection solve;
    SweepSection sweep;
    MpcSection mpc;
    CheckSection check;
    BenchSection bench;
  };

  namespace detail
  {
    /// Reads the members of one JSON object and remembers which keys were
    /// consumed, so leftovers can be reported as unknown.
    class ObjectReader
    {
    public:
      ObjectReader(const json &object, std::string path) : j_(object), path_(std::move(path))
      {
        if (!j_.is_object())
          throw ConfigError("'" + display(path_) + "' must be an object");
      }

      bool has(const std::string &key) const { return j_.contains(key); }
      std::string path_of(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

      const json *raw(const std::string &key)
      {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
      }

      template <class T>
      void read(const std::string &key, T &out)
      {
        const json *v = raw(key);
        if (!v)
          return;
        try
        {
          if constexpr (std::is_same_v<T, bool>)
          {
            if (!v->is_boolean())
              throw ConfigError("");
          }
          else if constexpr (std::is_integral_v<T>)
          {
            if (!v->is_number_integer())
              throw ConfigError("");
            if constexpr (std::is_unsigned_v<T>)
              if (v->is_number_integer() && !v->is_number_unsigned())
                throw ConfigError("");
          }
          else if constexpr (std::is_floating_point_v<T>)
          {
            if (!v->is_number())
              throw ConfigError("");
          }
          else if constexpr (std::is_same_v<T, std::string>)
          {
            if (!v->is_string())
              throw ConfigError("");
          }
          out = v->get<T>();
        }
        catch (const std::exception &)
        {
          throw ConfigError("key '" + path_of(key) + "': expected " + type_name<T>() + ", got " +
                            v->dump());
        }
      }

      template <class T>
      void read_list(const std::string &key, std::vector<T> &out)
      {
        const json *v = raw(key);
        if (!v)
          return;
        if (!v->is_array())
          throw ConfigError("key '" + path_of(key) + "': expected an array");
        std::vector<T> values;
        for (size_t i = 0; i < v->size(); ++i)
        {
          json wrapper = json::object();
          wrapper["v"] = (*v)[i];
          ObjectReader item(wrapper, path_of(key) + "[" + std::to_string(i) + "]");
          T value{};
          item.read_element(value);
          values.push_back(value);
        }
        out = std::move(values);
      }

      /// Reject members that were never read.
      void finish() const
      {
        for (auto it = j_.begin(); it != j_.end(); ++it)
          if (!seen_.count(it.key()))
            throw ConfigError("unknown key '" + path_of(it.key()) + "'");
      }

    private:
      template <class T>
      void read_element(T &out)
      {
        const json &v = j_.at("v");
        const std::string saved = path_;
        try
        {
          read("v", out);
        }
        catch (const ConfigError &)
        {
          throw ConfigError("key '" + saved + "': expected " + type_name<T>() + ", got " + v.dump());
        }
      }

      template <class T>
      static std::string type_name()
      {
        if constexpr (std::is_same_v<T, bool>)
          return "a boolean";
        else if constexpr (std::is_unsigned_v<T>)
          return "a non-negative integer";
        else if constexpr (std::is_integral_v<T>)
          return "an integer";
        else if constexpr (std::is_floating_point_v<T>)
          return "a number";
        else
          return "a string";
      }

      static std::string display(const std::string &p) { return p.empty() ? "<root>" : p; }

      const json &j_;
      std::string path_;
      std::set<std::string> seen_;
    };

    inline void require(bool ok, const std::string &message)
    {
      if (!ok)
        throw ConfigError(message);
    }
  } // namespace detail

  /// Matrix from nested rows, {"diag": [...]} or {"scaled_identity": {"n": .., "s": ..}}.
  inline Matrix parse_matrix(const json &v, const std::string &path)
  {
    if (v.is_array())
    {
      const size_t rows = v.size();
      detail::require(rows > 0, "key '" + path + "': matrix must have at least one row");
      size_t cols = 0;
      for (size_t i = 0; i < rows; ++i)
      {
        detail::require(v[i].is_array(), "key '" + path + "': row " + std::to_string(i) + " is not an array");
        if (i == 0)
          cols = v[i].size();
        detail::require(v[i].size() == cols && cols > 0, "key '" + path + "': ragged or empty rows");
      }
      Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j)
        {
          detail::require(v[i][j].is_number(), "key '" + path + "': non-numeric entry");
          m(static_cast<Index>(i), static_cast<Index>(j)) = v[i][j].get<double>();
        }
      return m;
    }
    detail::ObjectReader r(v, path);
    if (r.has("diag"))
    {
      std::vector<double> d;
      r.read_list("diag", d);
      r.finish();
      detail::require(!d.empty(), "key '" + path + ".diag': must not be empty");
      return Vector(Eigen::Map<const Vector>(d.data(), static_cast<Index>(d.size()))).asDiagonal();
    }
    if (r.has("scaled_identity"))
    {
      detail::ObjectReader s(*r.raw("scaled_identity"), path + ".scaled_identity");
      r.finish();
      int n = 0;
      double scale = 0.0;
      detail::require(s.has("n") && s.has("s"), "key '" + path + ".scaled_identity': needs 'n' and 's'");
      s.read("n", n);
      s.read("s", scale);
      s.finish();
      detail::require(n > 0, "key '" + path + ".scaled_identity.n': must be positive");
      return scale * Matrix::Identity(n, n);
    }
    r.finish();
    throw ConfigError("key '" + path + "': expected nested rows, {\"diag\": [...]} or {\"scaled_identity\": {...}}");
  }

  inline json matrix_to_json(const Matrix &m)
  {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i)
    {
      json row = json::array();
      for (Index j = 0; j < m.cols(); ++j)
        row.push_back(m(i, j));
      rows.push_back(row);
    }
    return rows;
  }

  inline ModelConfig parse_model(const json &j)
  {
    detail::ObjectReader r(j, "model");
    ModelConfig m;
    r.read("name", m.name);
    if (m.name != "quadrotor" && m.name != "lq" && m.name != "random_smooth")
      throw ConfigError("key 'model.name': unknown model '" + m.name + "' (expected quadrotor, lq or random_smooth)");
    if (!m.is_quadrotor())
    {
      m.T = 6;
      m.t = 3;
      m.mu = 0.3;
    }
    r.read("T", m.T);
    r.read("t", m.t);
    r.read("mu", m.mu);
    if (m.is_quadrotor())
    {
      r.read("mass", m.quadrotor.mass);
      r.read("inertia", m.quadrotor.inertia);
      r.read("arm", m.quadrotor.arm);
      r.read("gravity", m.quadrotor.gravity);
      r.read("dt", m.quadrotor.dt);
      r.read("rk4_substeps", m.quadrotor.rk4_substeps);
      r.read("clearance_substeps", m.clearance_substeps);
      if (const json *v = r.raw("P"))
        m.weights.prior = parse_matrix(*v, "model.P");
      if (const json *v = r.raw("Q"))
        m.weights.process = parse_matrix(*v, "model.Q");
      if (const json *v = r.raw("R"))
        m.weights.measurement = parse_matrix(*v, "model.R");
      m.quadrotor.check();
      detail::require(m.clearance_substeps >= 1, "key 'model.clearance_substeps': must be >= 1");
      detail::require(m.weights.prior.rows() == 6 && m.weights.prior.cols() == 6, "key 'model.P': must be 6x6");
      detail::require(m.weights.process.rows() == 6 && m.weights.process.cols() == 6, "key 'model.Q': must be 6x6");
      detail::require(m.weights.measurement.rows() == 3 && m.weights.measurement.cols() == 3,
                      "key 'model.R': must be 3x3");
    }
    else
    {
      r.read("nx", m.nx);
      r.read("nu", m.nu);
      r.read("ny", m.ny);
      r.read("zero_cost", m.zero_cost);
      if (m.name == "random_smooth")
        r.read("nonlinearity", m.nonlinearity);
      else
        m.nonlinearity = 0.0;
      detail::require(m.nx >= 1 && m.nu >= 1 && m.ny >= 1, "model dimensions nx, nu, ny must be >= 1");
    }
    r.finish();
    detail::require(m.T >= 1, "key 'model.T': must be >= 1");
    detail::require(m.t >= 0 && m.t <= m.T, "key 'model.t': must lie in [0, T]");
    return m;
  }

  inline SolverOptions parse_solver(const json &j)
  {
    detail::ObjectReader r(j, "solver");
    SolverOptions o;
    r.read("tol_merit_decrease", o.tol_merit_decrease);
    r.read("max_iters", o.max_iters);
    r.read("armijo_c", o.armijo_c);
    r.read("alpha_shrink", o.alpha_shrink);
    r.read("alpha_min", o.alpha_min);
    r.read("gauss_newton", o.gauss_newton);
    r.read("verbose", o.verbose);
    r.finish();
    o.check();
    return o;
  }

  inline RunConfig parse(const json &j)
  {
    detail::ObjectReader r(j, "");
    RunConfig c;
    if (const json *v = r.raw("model"))
      c.model = parse_model(*v);
    if (const json *v = r.raw("solver"))
      c.solver = parse_solver(*v);
    r.read("seed", c.seed);
    r.read("output_dir", c.output_dir);
    r.read("threads", c.threads);
    detail::require(c.threads >= 0, "key 'threads': must be >= 0");

    if (const json *v = r.raw("solve"))
    {
      detail::ObjectReader s(*v, "solve");
      s.read("initial", c.solve.initial);
      s.read("perturbation", c.solve.perturbation);
      s.finish();
      detail::require(c.solve.initial == "default" || c.solve.initial == "rollout" || c.solve.initial == "random",
                      "key 'solve.initial': expected default, rollout or random");
      detail::require(c.solve.perturbation >= 0.0, "key 'solve.perturbation': must be >= 0");
    }
    if (const json *v = r.raw("sweep"))
    {
      detail::ObjectReader s(*v, "sweep");
      s.read_list("mu_list", c.sweep.mu_list);
      s.finish();
      detail::require(!c.sweep.mu_list.empty(), "key 'sweep.mu_list': must not be empty");
    }
    if (const json *v = r.raw("mpc"))
    {
      detail::ObjectReader s(*v, "mpc");
      s.read("n_rollouts", c.mpc.n_rollouts);
      s.read("noise_scale", c.mpc.noise_scale);
      s.read("cold_start", c.mpc.cold_start);
      s.read_list("controllers", c.mpc.controllers);
      s.finish();
      detail::require(c.mpc.n_rollouts >= 1, "key 'mpc.n_rollouts': must be >= 1");
      detail::require(c.mpc.noise_scale >= 0.0, "key 'mpc.noise_scale': must be >= 0");
      detail::require(!c.mpc.controllers.empty(), "key 'mpc.controllers': must not be empty");
      for (const auto &name : c.mpc.controllers)
        detail::require(name == "game" || name == "neutral",
                        "key 'mpc.controllers': unknown controller '" + name + "' (expected game or neutral)");
    }
    if (const json *v = r.raw("check"))
    {
      detail::ObjectReader s(*v, "check");
      s.read_list("seeds", c.check.seeds);
      s.read("perturbation", c.check.perturbation);
      s.read("corrupt_jacobian", c.check.corrupt_jacobian);
      s.read("gradient_rel_tol", c.check.gradient_rel_tol);
      s.read("hessian_abs_tol", c.check.hessian_abs_tol);
      s.read("step_rel_tol", c.check.step_rel_tol);
      s.read("descent_rel_tol", c.check.descent_rel_tol);
      s.finish();
    }
    if (const json *v = r.raw("bench"))
    {
      detail::ObjectReader s(*v, "bench");
      s.read_list("horizons", c.bench.horizons);
      s.read("reps", c.bench.reps);
      s.read("dense", c.bench.dense);
      s.read("dense_reps", c.bench.dense_reps);
      s.finish();
      detail::require(!c.bench.horizons.empty(), "key 'bench.horizons': must not be empty");
      for (int T : c.bench.horizons)
        detail::require(T >= 1, "key 'bench.horizons': horizons must be >= 1");
      detail::require(c.bench.reps >= 1 && c.bench.dense_reps >= 1, "key 'bench.reps': must be >= 1");
    }
    r.finish();
    return c;
  }

  /// Parse JSON text. Syntax errors carry the line and column.
  inline RunConfig parse_text(const std::string &text, const std::string &origin = "<config>")
  {
    json j;
    try
    {
      j = json::parse(text);
    }
    catch (const json::parse_error &e)
    {
      throw ConfigError(origin + ": " + e.what());
    }
    return parse(j);
  }

  inline RunConfig load(const std::string &path)
  {
    std::ifstream in(path);
    if (!in)
      throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_text(buffer.str(), path);
  }

  /// Fully resolved configuration; parse(to_json(c)) reproduces c.
  inline json to_json(const RunConfig &c)
  {
    json model;
    const ModelConfig &m = c.model;
    model["name"] = m.name;
    model["T"] = m.T;
    model["t"] = m.t;
    model["mu"] = m.mu;
    if (m.is_quadrotor())
    {
      model["mass"] = m.quadrotor.mass;
      model["inertia"] = m.quadrotor.inertia;
      model["arm"] = m.quadrotor.arm;
      model["gravity"] = m.quadrotor.gravity;
      model["dt"] = m.quadrotor.dt;
      model["rk4_substeps"] = m.quadrotor.rk4_substeps;
      model["clearance_substeps"] = m.clearance_substeps;
      model["P"] = matrix_to_json(m.weights.prior);
      model["Q"] = matrix_to_json(m.weights.process);
      model["R"] = matrix_to_json(m.weights.measurement);
    }
    else
    {
      model["nx"] = m.nx;
      model["nu"] = m.nu;
      model["ny"] = m.ny;
      model["zero_cost"] = m.zero_cost;
      if (m.name == "random_smooth")
        model["nonlinearity"] = m.nonlinearity;
    }

    json out;
    out["model"] = model;
    out["solver"] = {{"tol_merit_decrease", c.solver.tol_merit_decrease},
                     {"max_iters", c.solver.max_iters},
                     {"armijo_c", c.solver.armijo_c},
                     {"alpha_shrink", c.solver.alpha_shrink},
                     {"alpha_min", c.solver.alpha_min},
                     {"gauss_newton", c.solver.gauss_newton},
                     {"verbose", c.solver.verbose}};
    out["seed"] = c.seed;
    out["output_dir"] = c.output_dir;
    out["threads"] = c.threads;
    out["solve"] = {{"initial", c.solve.initial}, {"perturbation", c.solve.perturbation}};
    out["sweep"] = {{"mu_list", c.sweep.mu_list}};
    out["mpc"] = {{"n_rollouts", c.mpc.n_rollouts},
                  {"noise_scale", c.mpc.noise_scale},
                  {"cold_start", c.mpc.cold_start},
                  {"controllers", c.mpc.controllers}};
    out["check"] = {{"seeds", c.check.seeds},
                    {"perturbation", c.check.perturbation},
                    {"corrupt_jacobian", c.check.corrupt_jacobian},
                    {"gradient_rel_tol", c.check.gradient_rel_tol},
                    {"hessian_abs_tol", c.check.hessian_abs_tol},
                    {"step_rel_tol", c.check.step_rel_tol},
                    {"descent_rel_tol", c.check.descent_rel_tol}};
    out["bench"] = {{"horizons", c.bench.horizons},
                    {"reps", c.bench.reps},
                    {"dense", c.bench.dense},
                    {"dense_reps", c.bench.dense_reps}};
    return out;
  }

} // namespace stagewise::config
