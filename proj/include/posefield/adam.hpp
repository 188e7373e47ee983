#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "posefield/tensor.hpp"

namespace posefield {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for one parameter group. Sized lazily on the first step.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step_count = 0;
};

/// One bias-corrected Adam update over `params` using their current gradients.
///
/// Entries whose gradient is exactly zero are left alone, moments included, so
/// grid rows that a batch never touched do not drift on stale momentum. The
/// gradients themselves are not cleared; callers zero them.
///
/// Throws OptimizerError naming the parameter index when a gradient is
/// non-finite; in that case nothing is modified.
void adam_step(std::span<ad::Tensor> params, AdamState& state, double lr);

void zero_grads(std::span<ad::Tensor> params);

}  // namespace posefield
