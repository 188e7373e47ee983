#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "posefield/generator.hpp"
#include "posefield/pose.hpp"
#include "posefield/rng.hpp"
#include "posefield/tensor.hpp"

namespace posefield {

struct GridSpec {
  Dof dof = Dof::alpha;
  double lo = 0.0;
  double hi = kTwoPi;
  std::size_t n_grid = 36;
  bool periodic = true;
  std::size_t dim = 96;
  std::size_t block = 16;
};

/// Initialization scales for a fresh representation.
struct InitSpec {
  double generator_stddev = 0.1;
};

/// Unit d-vectors stored at the grid points of one DOF, plus the generator
/// that moves a vector along that DOF.
///
/// Periodic grids have n points on [lo, hi) with spacing (hi-lo)/n; others
/// have n points on [lo, hi] with spacing (hi-lo)/(n-1).
class DofGrid {
 public:
  DofGrid() = default;
  DofGrid(const GridSpec& spec, Rng& rng, const InitSpec& init = {});

  const GridSpec& spec() const { return spec_; }
  Dof dof() const { return spec_.dof; }
  std::size_t size() const { return spec_.n_grid; }
  std::size_t dim() const { return spec_.dim; }
  bool periodic() const { return spec_.periodic; }
  double spacing() const;
  double grid_value(std::size_t k) const;

  ad::Tensor& vectors() { return vectors_; }
  const ad::Tensor& vectors() const { return vectors_; }
  GeneratorMatrix& generator() { return generator_; }
  const GeneratorMatrix& generator() const { return generator_; }

  struct Anchor {
    std::size_t index = 0;
    double delta = 0.0;
  };
  /// Nearest grid point and the signed residual value - grid_value(index).
  /// Periodic values wrap; non-periodic values outside [lo, hi] throw RangeError.
  Anchor anchor(double value) const;
  /// Maps a value into the grid's canonical range (wraps periodic DOFs).
  double canonical(double value) const;

 private:
  GridSpec spec_;
  ad::Tensor vectors_;
  GeneratorMatrix generator_;
};

/// Differentiable encoding of one value as a 1×d row.
ad::Tensor encode_dof(const DofGrid& grid, double value);
/// Differentiable encoding of many values as a P×d matrix.
ad::Tensor encode_dof_rows(const DofGrid& grid, std::span<const double> values);
/// Plain encoding with a pre-materialized generator, for search loops.
Vector encode_dof_plain(const DofGrid& grid, const Matrix& generator, double value);

/// argmin_l ||v(l) - v_hat||²: scan all grid points, then golden-section
/// refinement within one spacing either side of the winner down to
/// spacing/64. Ties resolve toward the smaller coordinate.
double decode_dof(const DofGrid& grid, std::span<const double> v_hat);

/// Ordered per-DOF grids; the pose vector concatenates them in DOF order.
class PoseVectorSystem {
 public:
  PoseVectorSystem() = default;
  PoseVectorSystem(std::vector<GridSpec> specs, Rng& rng, const InitSpec& init = {});

  std::span<DofGrid> grids() { return grids_; }
  std::span<const DofGrid> grids() const { return grids_; }
  bool empty() const { return grids_.empty(); }
  std::size_t total_dim() const;
  /// Column offset of a DOF inside the concatenated vector.
  std::size_t offset(std::size_t grid_index) const;
  const DofGrid* find(Dof dof) const;

  /// All trainable tensors: per grid its vectors then its generator params.
  std::vector<ad::Tensor> parameters();

 private:
  std::vector<DofGrid> grids_;
};

ad::Tensor encode_pose(const PoseVectorSystem& sys, const Pose& pose);
ad::Tensor encode_pose_rows(const PoseVectorSystem& sys, std::span<const Pose> poses);
/// Decodes every active DOF from its slice of a concatenated vector.
Pose decode_pose(const PoseVectorSystem& sys, std::span<const double> v_hat);

/// A pose and a displacement; the loss compares v(p + Δ) to rotated v(p).
struct RotationPair {
  Pose pose;
  Pose delta;
};

/// Anchor poses uniform over each range; displacements uniform on
/// [-max_cells·h, max_cells·h], with non-periodic anchors drawn so p + Δ stays
/// in range.
std::vector<RotationPair> sample_rotation_pairs(const PoseVectorSystem& sys, std::size_t count,
                                                Rng& rng, double max_cells = 2.0);

/// Mean over pairs and DOFs of ||v(l + Δ) - T(B, Δ)·v(l)||², where T is the
/// second-order expansion of exp(BΔ). Throws ContractError when some |Δ|
/// exceeds max_cells spacings.
ad::Tensor rotation_loss(const PoseVectorSystem& sys, std::span<const RotationPair> pairs,
                         double max_cells = 2.0);

/// Projects every row of `vectors` to unit length. A zero row is redrawn from
/// a unit Gaussian first.
void renormalize_rows(ad::Tensor& vectors, Rng& rng);
void renormalize(PoseVectorSystem& sys, Rng& rng);

/// G_ij = <v(grid_i), v(grid_j)>, row-major n×n.
Matrix gram_matrix(const ad::Tensor& vectors);
/// For each offset o, the standard deviation over i of G(i, i+o) (indices
/// wrapped); 0 everywhere for an exactly circulant matrix.
std::vector<double> circulant_deviation(const Matrix& gram);

}  // namespace posefield
