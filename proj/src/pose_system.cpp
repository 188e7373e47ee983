#include "posefield/pose_system.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "posefield/error.hpp"

namespace posefield {

// ---- pose helpers ----------------------------------------------------------

std::string_view dof_name(Dof dof) {
  switch (dof) {
    case Dof::x: return "x";
    case Dof::y: return "y";
    case Dof::z: return "z";
    case Dof::alpha: return "alpha";
    case Dof::beta: return "beta";
    case Dof::gamma: return "gamma";
  }
  return "?";
}

Dof parse_dof(std::string_view name) {
  for (std::size_t i = 0; i < kDofCount; ++i) {
    const auto d = static_cast<Dof>(i);
    if (dof_name(d) == name) return d;
  }
  throw ConfigError("unknown degree of freedom '" + std::string(name) + "'");
}

bool is_angle(Dof dof) { return dof == Dof::alpha || dof == Dof::beta || dof == Dof::gamma; }

double wrap_angle(double radians) {
  double r = std::fmod(radians, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

double angle_distance(double a, double b) {
  const double d = std::abs(wrap_angle(a) - wrap_angle(b));
  return std::min(d, kTwoPi - d);
}

// ---- DofGrid ---------------------------------------------------------------

DofGrid::DofGrid(const GridSpec& spec, Rng& rng, const InitSpec& init) : spec_(spec) {
  if (!(spec.hi > spec.lo)) {
    throw ConfigError("grid for " + std::string(dof_name(spec.dof)) + " has empty range");
  }
  if (spec.n_grid < 2) {
    throw ConfigError("grid for " + std::string(dof_name(spec.dof)) + " needs at least 2 points");
  }
  generator_ = GeneratorMatrix::random(spec.dim, spec.block, rng, init.generator_stddev);
  vectors_ = ad::Tensor::zeros({spec.n_grid, spec.dim}, true);
  for (auto& v : vectors_.values()) v = gaussian(rng);
  renormalize_rows(vectors_, rng);
}

double DofGrid::spacing() const {
  const double span = spec_.hi - spec_.lo;
  return spec_.periodic ? span / static_cast<double>(spec_.n_grid)
                        : span / static_cast<double>(spec_.n_grid - 1);
}

double DofGrid::grid_value(std::size_t k) const {
  return spec_.lo + static_cast<double>(k) * spacing();
}

double DofGrid::canonical(double value) const {
  if (!spec_.periodic) return value;
  const double period = spec_.hi - spec_.lo;
  double r = std::fmod(value - spec_.lo, period);
  if (r < 0.0) r += period;
  if (r >= period) r = 0.0;
  return spec_.lo + r;
}

DofGrid::Anchor DofGrid::anchor(double value) const {
  const double h = spacing();
  if (!std::isfinite(value)) {
    throw RangeError(std::string(dof_name(spec_.dof)) + ": non-finite value");
  }
  if (spec_.periodic) {
    const double v = canonical(value);
    const auto k = static_cast<std::size_t>(std::llround((v - spec_.lo) / h));
    const double delta = v - (spec_.lo + static_cast<double>(k) * h);
    return {k % spec_.n_grid, delta};
  }
  if (value < spec_.lo || value > spec_.hi) {
    throw RangeError(std::string(dof_name(spec_.dof)) + " value " + std::to_string(value) +
                     " outside [" + std::to_string(spec_.lo) + ", " + std::to_string(spec_.hi) +
                     "]");
  }
  const auto raw = std::llround((value - spec_.lo) / h);
  const auto k = static_cast<std::size_t>(
      std::clamp<long long>(raw, 0, static_cast<long long>(spec_.n_grid) - 1));
  return {k, value - grid_value(k)};
}

ad::Tensor encode_dof_rows(const DofGrid& grid, std::span<const double> values) {
  std::vector<std::size_t> index(values.size());
  std::vector<double> deltas(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto a = grid.anchor(values[i]);
    index[i] = a.index;
    deltas[i] = a.delta;
  }
  const ad::Tensor anchors = ad::gather_rows(grid.vectors(), index);
  return taylor_rotate_rows(anchors, ad::transpose(grid.generator().materialize()), deltas);
}

ad::Tensor encode_dof(const DofGrid& grid, double value) {
  const double values[] = {value};
  return encode_dof_rows(grid, values);
}

Vector encode_dof_plain(const DofGrid& grid, const Matrix& generator, double value) {
  const auto a = grid.anchor(value);
  const auto d = static_cast<Eigen::Index>(grid.dim());
  const Vector v = Eigen::Map<const Vector>(grid.vectors().values().data() + a.index * grid.dim(), d);
  return taylor_rotate(generator, a.delta, v);
}

double decode_dof(const DofGrid& grid, std::span<const double> v_hat) {
  const auto d = static_cast<Eigen::Index>(grid.dim());
  if (v_hat.size() != grid.dim()) {
    throw ShapeError("decode_dof: got " + std::to_string(v_hat.size()) + " values for dim " +
                     std::to_string(grid.dim()));
  }
  const Eigen::Map<const Vector> target(v_hat.data(), d);
  const Eigen::Map<const Matrix> vectors(grid.vectors().values().data(),
                                         static_cast<Eigen::Index>(grid.size()), d);

  std::size_t best = 0;
  double best_dist = (vectors.row(0).transpose() - target).squaredNorm();
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double dist = (vectors.row(static_cast<Eigen::Index>(k)).transpose() - target).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = k;
    }
  }

  const Matrix generator = grid.generator().matrix();
  auto cost = [&](double l) { return (encode_dof_plain(grid, generator, l) - target).squaredNorm(); };

  const double h = grid.spacing();
  const double center = grid.grid_value(best);
  double lo = center - h;
  double hi = center + h;
  if (!grid.periodic()) {
    lo = std::max(lo, grid.spec().lo);
    hi = std::min(hi, grid.spec().hi);
  }

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double e = lo + inv_phi * (hi - lo);
  double fc = cost(c);
  double fe = cost(e);
  while (hi - lo > h / 64.0) {
    if (fc <= fe) {
      hi = e;
      e = c;
      fe = fc;
      c = hi - inv_phi * (hi - lo);
      fc = cost(c);
    } else {
      lo = c;
      c = e;
      fc = fe;
      e = lo + inv_phi * (hi - lo);
      fe = cost(e);
    }
  }
  const double refined = 0.5 * (lo + hi);
  const double refined_cost = cost(refined);
  const double grid_cost = cost(center);
  double result = refined;
  if (grid_cost < refined_cost || (grid_cost == refined_cost && center < refined)) result = center;
  return grid.canonical(result);
}

// ---- PoseVectorSystem --------------------------------------------------------

PoseVectorSystem::PoseVectorSystem(std::vector<GridSpec> specs, Rng& rng, const InitSpec& init) {
  std::sort(specs.begin(), specs.end(),
            [](const GridSpec& a, const GridSpec& b) { return a.dof < b.dof; });
  for (std::size_t i = 1; i < specs.size(); ++i) {
    if (specs[i].dof == specs[i - 1].dof) {
      throw ConfigError("duplicate grid for " + std::string(dof_name(specs[i].dof)));
    }
  }
  for (const auto& s : specs) grids_.emplace_back(s, rng, init);
}

std::size_t PoseVectorSystem::total_dim() const {
  std::size_t total = 0;
  for (const auto& g : grids_) total += g.dim();
  return total;
}

std::size_t PoseVectorSystem::offset(std::size_t grid_index) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < grid_index; ++i) off += grids_[i].dim();
  return off;
}

const DofGrid* PoseVectorSystem::find(Dof dof) const {
  for (const auto& g : grids_)
    if (g.dof() == dof) return &g;
  return nullptr;
}

std::vector<ad::Tensor> PoseVectorSystem::parameters() {
  std::vector<ad::Tensor> out;
  for (auto& g : grids_) {
    out.push_back(g.vectors());
    out.push_back(g.generator().params());
  }
  return out;
}

ad::Tensor encode_pose_rows(const PoseVectorSystem& sys, std::span<const Pose> poses) {
  if (sys.empty()) throw ContractError("encode_pose: system has no grids");
  std::vector<ad::Tensor> parts;
  std::vector<double> values(poses.size());
  for (const auto& grid : sys.grids()) {
    for (std::size_t i = 0; i < poses.size(); ++i) values[i] = poses[i][grid.dof()];
    parts.push_back(encode_dof_rows(grid, values));
  }
  return parts.size() == 1 ? parts.front() : ad::concat_cols(parts);
}

ad::Tensor encode_pose(const PoseVectorSystem& sys, const Pose& pose) {
  return encode_pose_rows(sys, std::span<const Pose>(&pose, 1));
}

Pose decode_pose(const PoseVectorSystem& sys, std::span<const double> v_hat) {
  if (v_hat.size() != sys.total_dim()) {
    throw ShapeError("decode_pose: got " + std::to_string(v_hat.size()) + " values for dim " +
                     std::to_string(sys.total_dim()));
  }
  Pose pose;
  std::size_t off = 0;
  for (const auto& grid : sys.grids()) {
    pose[grid.dof()] = decode_dof(grid, v_hat.subspan(off, grid.dim()));
    off += grid.dim();
  }
  return pose;
}

// ---- rotation loss ---------------------------------------------------------

std::vector<RotationPair> sample_rotation_pairs(const PoseVectorSystem& sys, std::size_t count,
                                                Rng& rng, double max_cells) {
  std::vector<RotationPair> pairs(count);
  for (auto& pair : pairs) {
    for (const auto& grid : sys.grids()) {
      const double reach = max_cells * grid.spacing();
      const double delta = uniform(rng, -reach, reach);
      const auto& s = grid.spec();
      double value;
      if (grid.periodic()) {
        value = uniform(rng, s.lo, s.hi);
      } else {
        value = uniform(rng, s.lo + std::max(0.0, -delta), s.hi - std::max(0.0, delta));
      }
      pair.pose[grid.dof()] = value;
      pair.delta[grid.dof()] = delta;
    }
  }
  return pairs;
}

ad::Tensor rotation_loss(const PoseVectorSystem& sys, std::span<const RotationPair> pairs,
                         double max_cells) {
  if (pairs.empty()) throw ContractError("rotation_loss: no pairs");
  if (sys.empty()) throw ContractError("rotation_loss: system has no grids");
  std::vector<ad::Tensor> terms;
  std::vector<double> from(pairs.size()), to(pairs.size()), deltas(pairs.size());
  for (const auto& grid : sys.grids()) {
    const double reach = max_cells * grid.spacing();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const double delta = pairs[i].delta[grid.dof()];
      if (std::abs(delta) > reach * (1.0 + 1e-12)) {
        throw ContractError("rotation_loss: |delta| " + std::to_string(std::abs(delta)) + " on " +
                            std::string(dof_name(grid.dof())) + " exceeds " +
                            std::to_string(reach));
      }
      from[i] = pairs[i].pose[grid.dof()];
      to[i] = from[i] + delta;
      deltas[i] = delta;
    }
    const ad::Tensor target = encode_dof_rows(grid, to);
    const ad::Tensor source = encode_dof_rows(grid, from);
    const ad::Tensor moved =
        taylor_rotate_rows(source, ad::transpose(grid.generator().materialize()), deltas);
    terms.push_back(ad::sum_squares(ad::sub(target, moved)));
  }
  ad::Tensor total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return ad::scale(total, 1.0 / static_cast<double>(pairs.size() * terms.size()));
}

// ---- normalization and diagnostics ------------------------------------------

void renormalize_rows(ad::Tensor& vectors, Rng& rng) {
  const auto n = vectors.rows(), d = vectors.cols();
  auto v = vectors.values();
  for (std::size_t r = 0; r < n; ++r) {
    auto row = v.subspan(r * d, d);
    double norm = 0.0;
    for (double x : row) norm += x * x;
    norm = std::sqrt(norm);
    while (!(norm > 0.0) || !std::isfinite(norm)) {
      norm = 0.0;
      for (auto& x : row) {
        x = gaussian(rng);
        norm += x * x;
      }
      norm = std::sqrt(norm);
    }
    for (auto& x : row) x /= norm;
  }
}

void renormalize(PoseVectorSystem& sys, Rng& rng) {
  for (auto& g : sys.grids()) renormalize_rows(g.vectors(), rng);
}

Matrix gram_matrix(const ad::Tensor& vectors) {
  const Eigen::Map<const Matrix> v(vectors.values().data(), static_cast<Eigen::Index>(vectors.rows()),
                                   static_cast<Eigen::Index>(vectors.cols()));
  return v * v.transpose();
}

std::vector<double> circulant_deviation(const Matrix& gram) {
  const auto n = gram.rows();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index o = 0; o < n; ++o) {
    double mean = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) mean += gram(i, (i + o) % n);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double dv = gram(i, (i + o) % n) - mean;
      var += dv * dv;
    }
    out[static_cast<std::size_t>(o)] = std::sqrt(var / static_cast<double>(n));
  }
  return out;
}

}  // namespace posefield
