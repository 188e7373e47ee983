#include "posefield/representation.hpp"

#include <algorithm>

#include "posefield/error.hpp"

namespace posefield {

PoseRepresentation::PoseRepresentation(const RepresentationSpec& spec, Rng& rng) : spec_(spec) {
  const InitSpec init{spec.generator_stddev};
  std::vector<GridSpec> grids;
  if (spec.kind == SceneKind::toyroom) {
    polar_.emplace(PolarSpec{0.0, kRoomSize, spec.position_grid, spec.theta_bank, spec.dim, spec.block},
                   rng, init);
    grids.push_back({Dof::alpha, 0.0, kTwoPi, spec.angle_grid, true, spec.dim, spec.block});
  } else {
    grids.push_back({Dof::alpha, 0.0, kTwoPi, spec.angle_grid, true, spec.dim, spec.block});
    grids.push_back({Dof::beta, -kElevationLimit, kElevationLimit, spec.elevation_grid, false,
                     spec.dim, spec.block});
  }
  dofs_ = PoseVectorSystem(std::move(grids), rng, init);
}

std::size_t PoseRepresentation::total_dim() const {
  return dofs_.total_dim() + (polar_ ? polar_->dim() : 0);
}

ad::Tensor PoseRepresentation::encode(std::span<const Pose> poses) const {
  ad::Tensor rest = encode_pose_rows(dofs_, poses);
  if (!polar_) return rest;
  std::vector<Position> points(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) points[i] = {poses[i][Dof::x], poses[i][Dof::y]};
  return ad::concat_cols({encode_position_rows(*polar_, points), rest});
}

Pose PoseRepresentation::decode(std::span<const double> v_hat) const {
  if (v_hat.size() != total_dim()) {
    throw ShapeError("decode: got " + std::to_string(v_hat.size()) + " values for dim " +
                     std::to_string(total_dim()));
  }
  std::size_t off = 0;
  Pose pose;
  if (polar_) {
    const Position p = decode_position(*polar_, v_hat.subspan(0, polar_->dim()));
    pose[Dof::x] = p[0];
    pose[Dof::y] = p[1];
    off = polar_->dim();
  }
  const Pose rest = decode_pose(dofs_, v_hat.subspan(off));
  for (const auto& g : dofs_.grids()) pose[g.dof()] = rest[g.dof()];
  return pose;
}

std::vector<ad::Tensor> PoseRepresentation::parameters() {
  std::vector<ad::Tensor> out;
  if (polar_) out = polar_->parameters();
  for (auto& t : dofs_.parameters()) out.push_back(t);
  return out;
}

void PoseRepresentation::renormalize(Rng& rng) {
  if (polar_) posefield::renormalize(*polar_, rng);
  posefield::renormalize(dofs_, rng);
}

PoseRepresentation::Losses PoseRepresentation::rotation_losses(Rng& rng, std::size_t pairs,
                                                               double max_cells) const {
  Losses out;
  const auto rot_pairs = sample_rotation_pairs(dofs_, pairs, rng, max_cells);
  // rotation_loss averages over DOFs; the sum restores one term per DOF.
  out.rot_sum = ad::scale(rotation_loss(dofs_, rot_pairs, max_cells),
                          static_cast<double>(dofs_.grids().size()));
  if (polar_) {
    const auto moves = sample_position_pairs(*polar_, pairs, rng, max_cells);
    const auto turns = sample_theta_pairs(*polar_, pairs, rng, max_cells);
    const auto polar = polar_losses(*polar_, moves, turns, max_cells);
    out.rot_x = polar.position;
    out.rot_theta = polar.theta;
  } else {
    out.rot_x = ad::Tensor::scalar(0.0);
    out.rot_theta = ad::Tensor::scalar(0.0);
  }
  return out;
}

std::vector<double> normalized_coordinates(SceneKind kind, const Pose& pose) {
  const auto dofs = active_dofs(kind);
  const auto ranges = pose_ranges(kind);
  std::vector<double> out(dofs.size());
  for (std::size_t i = 0; i < dofs.size(); ++i) {
    double v = pose[dofs[i]];
    if (dofs[i] == Dof::alpha) v = wrap_angle(v);
    out[i] = (v - ranges[i][0]) / (ranges[i][1] - ranges[i][0]);
  }
  return out;
}

ad::Tensor coordinate_rows(SceneKind kind, std::span<const Pose> poses) {
  const std::size_t n = active_dofs(kind).size();
  std::vector<double> values;
  values.reserve(poses.size() * n);
  for (const auto& p : poses) {
    const auto row = normalized_coordinates(kind, p);
    values.insert(values.end(), row.begin(), row.end());
  }
  return ad::Tensor::from({poses.size(), n}, std::move(values));
}

Pose denormalize_coordinates(SceneKind kind, std::span<const double> values) {
  const auto dofs = active_dofs(kind);
  const auto ranges = pose_ranges(kind);
  if (values.size() != dofs.size()) {
    throw ShapeError("denormalize_coordinates: got " + std::to_string(values.size()) +
                     " values for " + std::to_string(dofs.size()) + " DOFs");
  }
  Pose p;
  for (std::size_t i = 0; i < dofs.size(); ++i) {
    const double v = ranges[i][0] + values[i] * (ranges[i][1] - ranges[i][0]);
    p[dofs[i]] = dofs[i] == Dof::alpha ? wrap_angle(v) : std::clamp(v, ranges[i][0], ranges[i][1]);
  }
  return p;
}

}  // namespace posefield
