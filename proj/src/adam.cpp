#include "posefield/adam.hpp"

#include <cmath>
#include <string>

#include "posefield/error.hpp"

namespace posefield {

void adam_step(std::span<ad::Tensor> params, AdamState& state, double lr) {
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (double g : params[p].grad()) {
      if (!std::isfinite(g)) {
        throw OptimizerError("non-finite gradient in parameter " + std::to_string(p));
      }
    }
  }
  if (state.first_moment.empty()) {
    for (auto& t : params) {
      state.first_moment.emplace_back(t.numel(), 0.0);
      state.second_moment.emplace_back(t.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw OptimizerError("optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }

  const auto& cfg = state.config;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].values();
    auto grads = params[p].grad();
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    if (m.size() != values.size()) {
      throw OptimizerError("moment size mismatch for parameter " + std::to_string(p));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[i];
      if (g == 0.0) continue;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

void zero_grads(std::span<ad::Tensor> params) {
  for (auto& t : params) t.zero_grad();
}

}  // namespace posefield
