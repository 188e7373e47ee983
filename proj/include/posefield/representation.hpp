#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "posefield/polar.hpp"
#include "posefield/pose_system.hpp"
#include "posefield/scene.hpp"

namespace posefield {

struct RepresentationSpec {
  SceneKind kind = SceneKind::turntable;
  std::size_t dim = 96;
  std::size_t block = 16;
  std::size_t position_grid = 20;   // toyroom: per axis over [0, 2] m
  std::size_t theta_bank = 36;      // toyroom: heading generators
  std::size_t angle_grid = 36;      // periodic azimuth / heading
  std::size_t elevation_grid = 13;  // turntable: [-π/3, π/3]
  double generator_stddev = 0.1;
};

/// The learned pose vector for one dataset kind.
///
/// toyroom: [polar position (x, y) | heading α]
/// turntable: [azimuth θ | elevation φ], stored as Dof::alpha and Dof::beta.
class PoseRepresentation {
 public:
  PoseRepresentation() = default;
  PoseRepresentation(const RepresentationSpec& spec, Rng& rng);

  const RepresentationSpec& spec() const { return spec_; }
  SceneKind kind() const { return spec_.kind; }
  std::size_t total_dim() const;

  bool has_polar() const { return polar_.has_value(); }
  PolarPositionSystem& polar() { return *polar_; }
  const PolarPositionSystem& polar() const { return *polar_; }
  PoseVectorSystem& dofs() { return dofs_; }
  const PoseVectorSystem& dofs() const { return dofs_; }

  /// P×total_dim, differentiable w.r.t. every representation parameter.
  ad::Tensor encode(std::span<const Pose> poses) const;
  Pose decode(std::span<const double> v_hat) const;

  /// Polar vectors, bank and C first (toyroom), then per-DOF grids.
  std::vector<ad::Tensor> parameters();
  void renormalize(Rng& rng);

  struct Losses {
    ad::Tensor rot_sum;    // Σ over pose-rep DOFs of the per-DOF rotation loss
    ad::Tensor rot_x;      // polar position term (zero without a polar system)
    ad::Tensor rot_theta;  // polar heading term (zero without a polar system)
  };
  /// Fresh pairs: `pairs` per term with steps up to max_cells spacings.
  Losses rotation_losses(Rng& rng, std::size_t pairs, double max_cells = 2.0) const;

 private:
  RepresentationSpec spec_;
  std::optional<PolarPositionSystem> polar_;
  PoseVectorSystem dofs_;
};

/// Raw pose coordinates scaled to [0, 1] per active DOF (coordinate baseline).
std::vector<double> normalized_coordinates(SceneKind kind, const Pose& pose);
ad::Tensor coordinate_rows(SceneKind kind, std::span<const Pose> poses);
/// Inverse of normalized_coordinates; angles wrapped, positions clamped.
Pose denormalize_coordinates(SceneKind kind, std::span<const double> values);

}  // namespace posefield
