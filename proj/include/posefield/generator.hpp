#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>

#include "posefield/rng.hpp"
#include "posefield/tensor.hpp"

namespace posefield {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Skew-symmetric block-diagonal d×d matrix parametrized by the strict upper
/// triangle of each s×s diagonal block. Entry (i, j), i < j, of a block holds
/// the parameter and (j, i) its negation; everything off the blocks is zero.
///
/// Parameters are ordered block by block, row-major within the upper triangle.
class GeneratorMatrix {
 public:
  GeneratorMatrix() = default;
  GeneratorMatrix(std::size_t dim, std::size_t block_size);

  /// Parameters drawn i.i.d. from N(0, stddev²).
  static GeneratorMatrix random(std::size_t dim, std::size_t block_size, Rng& rng,
                                double stddev);

  std::size_t dim() const { return dim_; }
  std::size_t block_size() const { return block_; }
  std::size_t block_count() const { return dim_ / block_; }
  std::size_t param_count() const { return params_.numel(); }
  static std::size_t param_count(std::size_t dim, std::size_t block_size);

  ad::Tensor& params() { return params_; }
  const ad::Tensor& params() const { return params_; }

  /// Differentiable d×d materialization.
  ad::Tensor materialize() const;
  /// Same matrix, detached from the graph.
  Matrix matrix() const;

 private:
  std::size_t dim_ = 0;
  std::size_t block_ = 0;
  ad::Tensor params_;
};

/// exp(generator·delta). Each diagonal block is exponentiated on its own by
/// scaling and squaring around a degree-18 Taylor polynomial.
Matrix lie_exp(const GeneratorMatrix& gen, double delta);
/// Same for an explicit matrix whose s×s diagonal blocks are independent.
Matrix lie_exp(const Matrix& generator, double delta, std::size_t block_size);
/// Dense exp(a) without block structure.
Matrix expm(const Matrix& a);

/// (I + B·δ + ½B²·δ²)·v for a d-vector v (shape [d] or [1×d]), as two
/// matrix-vector products. Returns a 1×d row.
ad::Tensor taylor_rotate(const GeneratorMatrix& gen, double delta, const ad::Tensor& v);

/// Row-batched second-order rotation. Row p of `rows` (P×d) is rotated by
/// delta[p]; `generator_t` is Bᵀ (d×d), so a row r maps to r + δ·rBᵀ + ½δ²·rBᵀBᵀ.
ad::Tensor taylor_rotate_rows(const ad::Tensor& rows, const ad::Tensor& generator_t,
                              std::span<const double> deltas);

/// Non-differentiable counterpart of taylor_rotate on plain vectors.
Vector taylor_rotate(const Matrix& generator, double delta, const Vector& v);

}  // namespace posefield
