#include "posefield/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "posefield/error.hpp"

namespace posefield {

double GradCheckReport::max() const {
  double m = 0.0;
  for (double e : max_rel_error) m = std::max(m, e);
  return m;
}

GradCheckReport check_gradients(std::span<ad::Tensor> params,
                                const std::function<ad::Tensor()>& build_loss, double eps,
                                double threshold) {
  std::vector<std::vector<double>> saved_grads;
  for (auto& p : params) {
    saved_grads.emplace_back(p.grad().begin(), p.grad().end());
    p.zero_grad();
  }

  const ad::Tensor loss = build_loss();
  const double base = loss.item();
  if (build_loss().item() != base) {
    throw DeterminismError("loss differs between two evaluations at identical parameters");
  }
  loss.backward();

  GradCheckReport report;
  report.threshold = threshold;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].values();
    const std::vector<double> analytic(params[p].grad().begin(), params[p].grad().end());
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + eps;
      const double up = build_loss().item();
      values[i] = original - eps;
      const double down = build_loss().item();
      values[i] = original;
      const double numeric = (up - down) / (2.0 * eps);
      const double rel = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric));
      worst = std::max(worst, rel);
      if (rel > threshold) report.flagged.push_back({p, i, analytic[i], numeric, rel});
    }
    report.max_rel_error.push_back(worst);
  }

  for (std::size_t p = 0; p < params.size(); ++p) {
    std::copy(saved_grads[p].begin(), saved_grads[p].end(), params[p].grad().begin());
  }
  return report;
}

}  // namespace posefield
