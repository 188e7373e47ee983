#include "posefield/polar.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "posefield/error.hpp"

namespace posefield {

namespace {

// Rows of `rows` mapped through B(θ)ᵀ for per-row (bank index, residual angle):
// r·B_kᵀ·T(C·ε)ᵀ.
ad::Tensor apply_direction_rows(const ad::Tensor& rows, const ad::Tensor& bank_t,
                                const ad::Tensor& rotator_t, std::span<const std::size_t> index,
                                std::span<const double> eps) {
  return taylor_rotate_rows(ad::bank_rowmul(rows, bank_t, index), rotator_t, eps);
}

// (I + B(θ)δr + ½B(θ)²δr²) applied to each row.
ad::Tensor move_rows(const ad::Tensor& rows, const ad::Tensor& bank_t, const ad::Tensor& rotator_t,
                     std::span<const std::size_t> index, std::span<const double> eps,
                     std::span<const double> dist) {
  std::vector<double> half_sq(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) half_sq[i] = 0.5 * dist[i] * dist[i];
  const ad::Tensor once = apply_direction_rows(rows, bank_t, rotator_t, index, eps);
  const ad::Tensor twice = apply_direction_rows(once, bank_t, rotator_t, index, eps);
  return ad::add(rows, ad::add(ad::row_scale(once, dist), ad::row_scale(twice, half_sq)));
}

}  // namespace

PolarPositionSystem::PolarPositionSystem(const PolarSpec& spec, Rng& rng, const InitSpec& init)
    : spec_(spec) {
  if (!(spec.hi > spec.lo) || spec.n_grid < 2 || spec.n_theta < 2) {
    throw ConfigError("polar system needs a non-empty square, n_grid >= 2 and n_theta >= 2");
  }
  for (std::size_t k = 0; k < spec.n_theta; ++k) {
    bank_.push_back(GeneratorMatrix::random(spec.dim, spec.block, rng, init.generator_stddev));
  }
  rotator_ = GeneratorMatrix::random(spec.dim, spec.block, rng, init.generator_stddev);
  vectors_ = ad::Tensor::zeros({spec.n_grid * spec.n_grid, spec.dim}, true);
  for (auto& v : vectors_.values()) v = gaussian(rng);
  renormalize_rows(vectors_, rng);
}

double PolarPositionSystem::spacing() const {
  return (spec_.hi - spec_.lo) / static_cast<double>(spec_.n_grid - 1);
}

double PolarPositionSystem::theta_spacing() const {
  return kTwoPi / static_cast<double>(spec_.n_theta);
}

double PolarPositionSystem::grid_coord(std::size_t i) const {
  return spec_.lo + static_cast<double>(i) * spacing();
}

PolarPositionSystem::Anchor PolarPositionSystem::anchor(const Position& p) const {
  for (double c : p) {
    if (!(c >= spec_.lo && c <= spec_.hi)) {
      throw RangeError("position (" + std::to_string(p[0]) + ", " + std::to_string(p[1]) +
                       ") outside [" + std::to_string(spec_.lo) + ", " + std::to_string(spec_.hi) +
                       "]^2");
    }
  }
  const double h = spacing();
  auto nearest = [&](double c) {
    const auto raw = std::llround((c - spec_.lo) / h);
    return static_cast<std::size_t>(
        std::clamp<long long>(raw, 0, static_cast<long long>(spec_.n_grid) - 1));
  };
  const std::size_t i = nearest(p[0]);
  const std::size_t j = nearest(p[1]);
  return {i * spec_.n_grid + j, p[0] - grid_coord(i), p[1] - grid_coord(j)};
}

PolarPositionSystem::ThetaAnchor PolarPositionSystem::theta_anchor(double theta) const {
  const double t = wrap_angle(theta);
  const double h = theta_spacing();
  const auto k = static_cast<std::size_t>(std::llround(t / h));
  return {k % spec_.n_theta, t - static_cast<double>(k) * h};
}

std::vector<ad::Tensor> PolarPositionSystem::parameters() {
  std::vector<ad::Tensor> out{vectors_};
  for (auto& b : bank_) out.push_back(b.params());
  out.push_back(rotator_.params());
  return out;
}

ad::Tensor PolarPositionSystem::bank_transposed() const {
  std::vector<ad::Tensor> parts;
  parts.reserve(bank_.size());
  for (const auto& b : bank_) parts.push_back(ad::transpose(b.materialize()));
  return ad::concat_rows(parts);
}

Matrix theta_generator(const PolarPositionSystem& sys, double theta) {
  const auto a = sys.theta_anchor(theta);
  // Snap the residual to 2^-40 rad so θ and θ + 2π give identical matrices.
  constexpr double kQuantum = 0x1p-40;
  const double delta = std::nearbyint(a.delta / kQuantum) * kQuantum;
  return lie_exp(sys.rotator(), delta) * sys.bank()[a.index].matrix();
}

ad::Tensor encode_position_rows(const PolarPositionSystem& sys, std::span<const Position> points) {
  const std::size_t n = points.size();
  std::vector<std::size_t> rows(n), dir_index(n);
  std::vector<double> dist(n), eps(n);
  for (std::size_t p = 0; p < n; ++p) {
    const auto a = sys.anchor(points[p]);
    rows[p] = a.row;
    dist[p] = std::hypot(a.dx, a.dy);
    const auto t = sys.theta_anchor(std::atan2(a.dy, a.dx));
    dir_index[p] = t.index;
    eps[p] = t.delta;
  }
  const ad::Tensor anchors = ad::gather_rows(sys.vectors(), rows);
  return move_rows(anchors, sys.bank_transposed(), ad::transpose(sys.rotator().materialize()),
                   dir_index, eps, dist);
}

ad::Tensor encode_position(const PolarPositionSystem& sys, const Position& p) {
  return encode_position_rows(sys, std::span<const Position>(&p, 1));
}

PolarCache make_cache(const PolarPositionSystem& sys) {
  PolarCache cache;
  for (const auto& b : sys.bank()) cache.bank.push_back(b.matrix());
  cache.rotator = sys.rotator().matrix();
  return cache;
}

Vector encode_position_plain(const PolarPositionSystem& sys, const PolarCache& cache,
                             const Position& p) {
  const auto a = sys.anchor(p);
  const auto d = static_cast<Eigen::Index>(sys.dim());
  const Vector v = Eigen::Map<const Vector>(sys.vectors().values().data() + a.row * sys.dim(), d);
  const double dist = std::hypot(a.dx, a.dy);
  const auto t = sys.theta_anchor(std::atan2(a.dy, a.dx));
  const Matrix& bk = cache.bank[t.index];
  auto direction = [&](const Vector& x) { return taylor_rotate(cache.rotator, t.delta, Vector(bk * x)); };
  const Vector once = direction(v);
  const Vector twice = direction(once);
  return v + dist * once + (0.5 * dist * dist) * twice;
}

Position decode_position(const PolarPositionSystem& sys, std::span<const double> v_hat) {
  const auto d = static_cast<Eigen::Index>(sys.dim());
  if (v_hat.size() != sys.dim()) {
    throw ShapeError("decode_position: got " + std::to_string(v_hat.size()) + " values for dim " +
                     std::to_string(sys.dim()));
  }
  const Eigen::Map<const Vector> target(v_hat.data(), d);
  const std::size_t n = sys.spec().n_grid;
  const Eigen::Map<const Matrix> vectors(sys.vectors().values().data(),
                                         static_cast<Eigen::Index>(n * n), d);
  std::size_t best = 0;
  double best_dist = (vectors.row(0).transpose() - target).squaredNorm();
  for (std::size_t r = 1; r < n * n; ++r) {
    const double dist = (vectors.row(static_cast<Eigen::Index>(r)).transpose() - target).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = r;
    }
  }

  const PolarCache cache = make_cache(sys);
  const double h = sys.spacing();
  const auto& s = sys.spec();
  Position winner{sys.grid_coord(best / n), sys.grid_coord(best % n)};
  double winner_cost = best_dist;
  // Samples every `step` within ±reach of `center`, keeping the cheapest.
  auto scan = [&](Position center, double step, int reach) {
    for (int mx = -reach; mx <= reach; ++mx) {
      const double x = center[0] + mx * step;
      if (x < s.lo || x > s.hi) continue;
      for (int my = -reach; my <= reach; ++my) {
        const double y = center[1] + my * step;
        if (y < s.lo || y > s.hi) continue;
        const Position p{x, y};
        const double cost = (encode_position_plain(sys, cache, p) - target).squaredNorm();
        if (cost < winner_cost ||
            (cost == winner_cost && (p[0] < winner[0] || (p[0] == winner[0] && p[1] < winner[1])))) {
          winner_cost = cost;
          winner = p;
        }
      }
    }
  };
  // The 3×3 cells around the anchor at h/16, then ±h/16 around the winner at
  // h/128. The h/16 lattice alone can miss by more than h/16 where the cost
  // is anisotropic.
  scan(winner, h / 16.0, 24);
  scan(winner, h / 128.0, 8);
  return winner;
}

std::vector<PositionPair> sample_position_pairs(const PolarPositionSystem& sys, std::size_t count,
                                                Rng& rng, double max_cells) {
  const double reach = max_cells * sys.spacing();
  const auto& s = sys.spec();
  std::vector<PositionPair> out(count);
  for (auto& pair : out) {
    for (std::size_t a = 0; a < 2; ++a) {
      const double move = uniform(rng, -reach, reach);
      pair.move[a] = move;
      pair.from[a] = uniform(rng, s.lo + std::max(0.0, -move), s.hi - std::max(0.0, move));
    }
  }
  return out;
}

std::vector<ThetaPair> sample_theta_pairs(const PolarPositionSystem& sys, std::size_t count,
                                          Rng& rng, double max_cells) {
  const double reach = max_cells * sys.theta_spacing();
  std::uniform_int_distribution<std::size_t> pick(0, sys.spec().n_theta - 1);
  std::vector<ThetaPair> out(count);
  for (auto& t : out) {
    t.anchor = pick(rng);
    t.delta = uniform(rng, -reach, reach);
  }
  return out;
}

PolarLosses polar_losses(const PolarPositionSystem& sys, std::span<const PositionPair> moves,
                         std::span<const ThetaPair> turns, double max_cells) {
  if (moves.empty() || turns.empty()) throw ContractError("polar_losses: empty pair set");
  const ad::Tensor bank_t = sys.bank_transposed();
  const ad::Tensor rotator_t = ad::transpose(sys.rotator().materialize());
  const std::size_t d = sys.dim();

  // Position term.
  const double max_dist = max_cells * std::sqrt(2.0) * sys.spacing();
  const std::size_t n = moves.size();
  std::vector<Position> from(n), to(n);
  std::vector<std::size_t> dir_index(n);
  std::vector<double> eps(n), dist(n);
  for (std::size_t p = 0; p < n; ++p) {
    const auto& m = moves[p];
    dist[p] = std::hypot(m.move[0], m.move[1]);
    if (dist[p] > max_dist * (1.0 + 1e-12)) {
      throw ContractError("polar_losses: move length " + std::to_string(dist[p]) + " exceeds " +
                          std::to_string(max_dist));
    }
    from[p] = m.from;
    to[p] = {m.from[0] + m.move[0], m.from[1] + m.move[1]};
    const auto t = sys.theta_anchor(std::atan2(m.move[1], m.move[0]));
    dir_index[p] = t.index;
    eps[p] = t.delta;
  }
  const ad::Tensor target = encode_position_rows(sys, to);
  const ad::Tensor source = encode_position_rows(sys, from);
  const ad::Tensor moved = move_rows(source, bank_t, rotator_t, dir_index, eps, dist);
  ad::Tensor position =
      ad::scale(ad::sum_squares(ad::sub(target, moved)), 1.0 / static_cast<double>(n));

  // Heading term, on the stacked-transpose form: (T·B)ᵀ = Bᵀ·Tᵀ row by row.
  const double max_turn = max_cells * sys.theta_spacing();
  const std::size_t m = turns.size();
  std::vector<std::size_t> src_rows, dst_rows;
  std::vector<double> src_eps, dst_eps;
  src_rows.reserve(m * d);
  dst_rows.reserve(m * d);
  for (const auto& t : turns) {
    if (std::abs(t.delta) > max_turn * (1.0 + 1e-12)) {
      throw ContractError("polar_losses: heading change " + std::to_string(std::abs(t.delta)) +
                          " exceeds " + std::to_string(max_turn));
    }
    if (t.anchor >= sys.spec().n_theta) throw ContractError("polar_losses: bad bank anchor");
    const double theta = static_cast<double>(t.anchor) * sys.theta_spacing();
    const auto dst = sys.theta_anchor(theta + t.delta);
    for (std::size_t r = 0; r < d; ++r) {
      src_rows.push_back(t.anchor * d + r);
      src_eps.push_back(t.delta);
      dst_rows.push_back(dst.index * d + r);
      dst_eps.push_back(dst.delta);
    }
  }
  const ad::Tensor turned = taylor_rotate_rows(ad::gather_rows(bank_t, src_rows), rotator_t, src_eps);
  const ad::Tensor reached = taylor_rotate_rows(ad::gather_rows(bank_t, dst_rows), rotator_t, dst_eps);
  ad::Tensor theta =
      ad::scale(ad::sum_squares(ad::sub(reached, turned)), 1.0 / static_cast<double>(m));
  return {position, theta};
}

void renormalize(PolarPositionSystem& sys, Rng& rng) { renormalize_rows(sys.vectors(), rng); }

}  // namespace posefield
