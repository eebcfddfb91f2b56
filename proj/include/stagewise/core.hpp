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

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace stagewise
{

  using Index = Eigen::Index;
  using Vector = Eigen::VectorXd;
  using Matrix = Eigen::MatrixXd;

  /// Second derivative of a vector-valued map. Slice i is the Hessian of
  /// output component i, so a map R^n -> R^m has m slices of size n x p.
  using Tensor3 = std::vector<Matrix>;

  inline Tensor3 zero_tensor(Index outputs, Index rows, Index cols)
  {
    return Tensor3(static_cast<size_t>(outputs), Matrix::Zero(rows, cols));
  }

  /// (a^T T)_{jl} = sum_i a_i T[i]_{jl}
  inline Matrix contract(const Vector &weights, const Tensor3 &tensor, Index rows, Index cols)
  {
    Matrix out = Matrix::Zero(rows, cols);
    if (tensor.empty())
      return out;
    if (static_cast<Index>(tensor.size()) != weights.size())
      throw std::invalid_argument("contract: tensor has " + std::to_string(tensor.size()) +
                                  " slices but weight vector has " + std::to_string(weights.size()));
    for (Index i = 0; i < weights.size(); ++i)
      out.noalias() += weights(i) * tensor[static_cast<size_t>(i)];
    return out;
  }

  inline Matrix symmetrized(const Matrix &m) { return 0.5 * (m + m.transpose()); }

  /// Raised when a positive-definiteness condition of the game breaks down:
  /// the saddle point is no longer a well-posed local Nash equilibrium.
  class DegenerateGame : public std::runtime_error
  {
  public:
    DegenerateGame(std::string pass, int index, const std::string &what)
        : std::runtime_error(pass + " at k=" + std::to_string(index) + ": " + what),
          pass_(std::move(pass)), index_(index) {}

    const std::string &pass() const noexcept { return pass_; }
    int index() const noexcept { return index_; }

  private:
    std::string pass_;
    int index_;
  };

  /// Invalid problem or experiment configuration.
  class ConfigError : public std::runtime_error
  {
  public:
    using std::runtime_error::runtime_error;
  };

  /// A rollout produced a non-finite state.
  class DivergenceError : public std::runtime_error
  {
  public:
    DivergenceError(int index, const std::string &what)
        : std::runtime_error(what + " at k=" + std::to_string(index)), index_(index) {}
    int index() const noexcept { return index_; }

  private:
    int index_;
  };

  /// Cholesky factor of a matrix that must be symmetric positive-definite.
  /// Throws DegenerateGame tagged with (pass, index) when it is not.
  inline Eigen::LLT<Matrix> require_positive_definite(const Matrix &m, const std::string &pass, int index,
                                                      const std::string &name)
  {
    Eigen::LLT<Matrix> llt(symmetrized(m));
    if (llt.info() != Eigen::Success || !llt.matrixLLT().allFinite())
      throw DegenerateGame(pass, index, name + " is not positive-definite");
    return llt;
  }

  inline bool is_positive_definite(const Matrix &m)
  {
    if (m.rows() != m.cols() || m.rows() == 0 || !m.allFinite())
      return false;
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + m.cwiseAbs().maxCoeff()))
      return false;
    Eigen::LLT<Matrix> llt(m);
    return llt.info() == Eigen::Success;
  }

} // namespace stagewise
