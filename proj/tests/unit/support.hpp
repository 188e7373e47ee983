#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "posefield/rng.hpp"
#include "posefield/tensor.hpp"

namespace testing_support {

using posefield::ad::Tensor;

inline Tensor random_tensor(posefield::ad::Shape shape, posefield::Rng& rng, bool grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), grad);
  for (auto& v : t.values()) v = posefield::gaussian(rng);
  return t;
}

// Central differences of a scalar function of one tensor's elements.
inline std::vector<double> numeric_grad(Tensor& x, const std::function<double()>& f,
                                        double eps = 1e-6) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double keep = x.values()[i];
    x.values()[i] = keep + eps;
    const double up = f();
    x.values()[i] = keep - eps;
    const double down = f();
    x.values()[i] = keep;
    out[i] = (up - down) / (2.0 * eps);
  }
  return out;
}

inline double max_rel_error(std::span<const double> analytic, std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) /
                                std::max(1e-8, std::abs(numeric[i])));
  }
  return worst;
}

}  // namespace testing_support
