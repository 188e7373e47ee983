#include "posefield/mlp.hpp"

#include <cmath>

#include "posefield/error.hpp"

namespace posefield {

Mlp::Mlp(const std::vector<std::size_t>& sizes, Rng& rng, OutputActivation output, double slope)
    : sizes_(sizes), output_(output), slope_(slope) {
  if (sizes.size() < 2) throw ConfigError("an MLP needs at least an input and an output size");
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    if (sizes[l] == 0 || sizes[l + 1] == 0) throw ConfigError("MLP layer sizes must be positive");
    const double stddev = std::sqrt(2.0 / static_cast<double>(sizes[l]));
    ad::Tensor w = ad::Tensor::zeros({sizes[l], sizes[l + 1]}, true);
    for (auto& v : w.values()) v = gaussian(rng, 0.0, stddev);
    weights_.push_back(w);
    biases_.push_back(ad::Tensor::zeros({1, sizes[l + 1]}, true));
  }
}

ad::Tensor Mlp::forward(const ad::Tensor& x) const {
  ad::Tensor h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = ad::add_bias(ad::matmul(h, weights_[l]), biases_[l]);
    if (l + 1 < weights_.size() || output_ == OutputActivation::leaky_relu) {
      h = ad::leaky_relu(h, slope_);
    } else if (output_ == OutputActivation::sigmoid) {
      h = ad::sigmoid(h);
    }
  }
  return h;
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].numel() + biases_[l].numel();
  return n;
}

std::vector<ad::Tensor> Mlp::parameters() const {
  std::vector<ad::Tensor> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(weights_[l]);
    out.push_back(biases_[l]);
  }
  return out;
}

void Mlp::set_requires_grad(bool on) {
  for (auto& w : weights_) w.set_requires_grad(on);
  for (auto& b : biases_) b.set_requires_grad(on);
}

}  // namespace posefield
