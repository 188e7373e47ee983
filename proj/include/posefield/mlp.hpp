#pragma once

#include <cstddef>
#include <vector>

#include "posefield/rng.hpp"
#include "posefield/tensor.hpp"

namespace posefield {

enum class OutputActivation { linear, sigmoid, leaky_relu };

/// Fully-connected stack: leaky_relu between layers, a chosen activation on
/// the last. Weights are in×out, so a batch is rows × in.
class Mlp {
 public:
  Mlp() = default;
  /// sizes = {in, hidden..., out}. Weights ~ N(0, 2/fan_in), biases zero.
  Mlp(const std::vector<std::size_t>& sizes, Rng& rng,
      OutputActivation output = OutputActivation::linear, double slope = ad::kDefaultLeakySlope);

  ad::Tensor forward(const ad::Tensor& x) const;

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t param_count() const;
  OutputActivation output() const { return output_; }
  double slope() const { return slope_; }

  /// weight0, bias0, weight1, bias1, ...
  std::vector<ad::Tensor> parameters() const;
  void set_requires_grad(bool on);

 private:
  std::vector<std::size_t> sizes_;
  std::vector<ad::Tensor> weights_;
  std::vector<ad::Tensor> biases_;
  OutputActivation output_ = OutputActivation::linear;
  double slope_ = ad::kDefaultLeakySlope;
};

}  // namespace posefield
