#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "posefield/generator.hpp"
#include "posefield/pose_system.hpp"
#include "posefield/rng.hpp"
#include "posefield/tensor.hpp"

namespace posefield {

struct PolarSpec {
  double lo = 0.0;
  double hi = 2.0;
  std::size_t n_grid = 20;   // per axis, endpoints included
  std::size_t n_theta = 36;  // uniform periodic grid over [0, 2π)
  std::size_t dim = 96;
  std::size_t block = 16;
};

using Position = std::array<double, 2>;

/// 2-D position representation: one unit vector per (x, y) grid point, a bank
/// of direction generators B(θ_k), and the matrix C that turns B(θ) as the
/// heading of a move changes.
///
/// Row i·n + j of the vector table holds grid point (x_i, y_j).
class PolarPositionSystem {
 public:
  PolarPositionSystem() = default;
  PolarPositionSystem(const PolarSpec& spec, Rng& rng, const InitSpec& init = {});

  const PolarSpec& spec() const { return spec_; }
  std::size_t dim() const { return spec_.dim; }
  double spacing() const;
  double theta_spacing() const;
  double grid_coord(std::size_t i) const;

  ad::Tensor& vectors() { return vectors_; }
  const ad::Tensor& vectors() const { return vectors_; }
  std::vector<GeneratorMatrix>& bank() { return bank_; }
  const std::vector<GeneratorMatrix>& bank() const { return bank_; }
  GeneratorMatrix& rotator() { return rotator_; }
  const GeneratorMatrix& rotator() const { return rotator_; }

  struct Anchor {
    std::size_t row = 0;
    double dx = 0.0;
    double dy = 0.0;
  };
  /// Nearest grid point; throws RangeError outside the square.
  Anchor anchor(const Position& p) const;

  struct ThetaAnchor {
    std::size_t index = 0;
    double delta = 0.0;
  };
  ThetaAnchor theta_anchor(double theta) const;

  /// Vectors, then each bank entry's params, then C's params.
  std::vector<ad::Tensor> parameters();

  /// Differentiable stack of B(θ_k)ᵀ, (n_theta·d)×d.
  ad::Tensor bank_transposed() const;

 private:
  PolarSpec spec_;
  ad::Tensor vectors_;
  std::vector<GeneratorMatrix> bank_;
  GeneratorMatrix rotator_;
};

/// exp(C·(θ - θ_k))·B(θ_k) with θ_k the nearest bank angle.
Matrix theta_generator(const PolarPositionSystem& sys, double theta);

/// Nearest-anchor encoding: the residual move (δr, θ) from the anchor is
/// applied as (I + B(θ)δr + ½B(θ)²δr²), where off-grid B(θ) uses the
/// second-order expansion of exp(C·Δθ) around its bank anchor.
ad::Tensor encode_position_rows(const PolarPositionSystem& sys, std::span<const Position> points);
ad::Tensor encode_position(const PolarPositionSystem& sys, const Position& p);

/// Pre-materialized matrices for repeated plain-valued encodes.
struct PolarCache {
  std::vector<Matrix> bank;
  Matrix rotator;
};
PolarCache make_cache(const PolarPositionSystem& sys);
Vector encode_position_plain(const PolarPositionSystem& sys, const PolarCache& cache,
                             const Position& p);

/// Scan of all grid vectors, then a search over the 3×3 surrounding cells
/// sampled at spacing/16, then ±spacing/16 around the winner at spacing/128.
/// Ties resolve to the lexicographically smaller (x, y).
Position decode_position(const PolarPositionSystem& sys, std::span<const double> v_hat);

struct PositionPair {
  Position from{};
  Position move{};
};

struct ThetaPair {
  std::size_t anchor = 0;  // bank index the move starts from
  double delta = 0.0;
};

/// Start points uniform over the square with moves uniform per axis on
/// [-max_cells·h, max_cells·h], kept inside the square.
std::vector<PositionPair> sample_position_pairs(const PolarPositionSystem& sys, std::size_t count,
                                                Rng& rng, double max_cells = 2.0);
/// Uniform bank anchors; Δθ uniform on [-max_cells·hθ, max_cells·hθ].
std::vector<ThetaPair> sample_theta_pairs(const PolarPositionSystem& sys, std::size_t count,
                                          Rng& rng, double max_cells = 2.0);

struct PolarLosses {
  ad::Tensor position;  // mean ||v(x+Δx) - T(B(θ)Δr)·v(x)||²
  ad::Tensor theta;     // mean ||B(θ_k+Δθ) - T(CΔθ)·B(θ_k)||_F²
};

/// Throws ContractError when some |Δr| exceeds max_cells cell diagonals or
/// some |Δθ| exceeds max_cells bank spacings.
PolarLosses polar_losses(const PolarPositionSystem& sys, std::span<const PositionPair> moves,
                         std::span<const ThetaPair> turns, double max_cells = 2.0);

void renormalize(PolarPositionSystem& sys, Rng& rng);

}  // namespace posefield
