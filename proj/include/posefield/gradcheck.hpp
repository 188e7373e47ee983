#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "posefield/tensor.hpp"

namespace posefield {

struct GradCheckEntry {
  std::size_t param = 0;
  std::size_t element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<double> max_rel_error;    // one per parameter tensor
  std::vector<GradCheckEntry> flagged;  // entries above the threshold
  double threshold = 0.0;

  double max() const;
  bool ok() const { return flagged.empty(); }
};

/// Compares backward() against central differences for every element of
/// `params`. Relative error is |analytic - numeric| / max(1e-8, |numeric|).
///
/// `build_loss` must rebuild the graph from the current parameter values each
/// call. Throws DeterminismError when two evaluations at identical parameters
/// disagree. Parameter values and gradients are restored on return.
GradCheckReport check_gradients(std::span<ad::Tensor> params,
                                const std::function<ad::Tensor()>& build_loss,
                                double eps = 1e-5, double threshold = 1e-4);

}  // namespace posefield
