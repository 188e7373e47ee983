#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "posefield/adam.hpp"
#include "posefield/error.hpp"
#include "support.hpp"

using namespace posefield;
using ad::Tensor;

TEST_CASE("zero gradient leaves parameters untouched in any state") {
  Rng rng = make_rng(21);
  std::vector<Tensor> params{testing_support::random_tensor({3, 3}, rng)};
  AdamState state;
  // Warm the moments first so the no-op holds for a non-fresh state too.
  for (int s = 0; s < 5; ++s) {
    for (auto& g : params[0].grad()) g = gaussian(rng);
    adam_step(params, state, 0.01);
  }
  const std::vector<double> before(params[0].values().begin(), params[0].values().end());
  zero_grads(params);
  adam_step(params, state, 0.01);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(params[0].values()[i] == before[i]);
  CHECK(state.step_count == 6);
}

TEST_CASE("first step moves each entry by about lr against the gradient sign") {
  std::vector<Tensor> params{Tensor::from({3}, {1.0, 1.0, 1.0}, true)};
  params[0].grad()[0] = 5.0;
  params[0].grad()[1] = -0.3;
  params[0].grad()[2] = 100.0;
  AdamState state;
  adam_step(params, state, 0.05);
  CHECK(params[0].values()[0] == doctest::Approx(0.95).epsilon(1e-6));
  CHECK(params[0].values()[1] == doctest::Approx(1.05).epsilon(1e-6));
  CHECK(params[0].values()[2] == doctest::Approx(0.95).epsilon(1e-6));
  CHECK(params[0].grad()[0] == 5.0);  // gradients are the caller's to clear
}

TEST_CASE("quadratic descent matches the scalar recurrence") {
  // Starts one unit below the minimum.
  std::vector<Tensor> params{Tensor::scalar(2.0, true)};
  AdamState state;
  double w = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 50; ++t) {
    zero_grads(params);
    const Tensor d = ad::sub(params[0], Tensor::scalar(3.0));
    ad::mul(d, d).backward();
    adam_step(params, state, 0.1);

    const double g = 2.0 * (w - 3.0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    w -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
  }
  CHECK(params[0].item() == doctest::Approx(w).epsilon(1e-12));
  CHECK(std::abs(w - 3.0) < 0.1);
}

TEST_CASE("non-finite gradient reports the parameter index and changes nothing") {
  std::vector<Tensor> params{Tensor::from({2}, {1, 2}, true), Tensor::from({2}, {3, 4}, true)};
  params[0].grad()[0] = 1.0;
  params[1].grad()[1] = std::numeric_limits<double>::quiet_NaN();
  AdamState state;
  try {
    adam_step(params, state, 0.1);
    FAIL("expected OptimizerError");
  } catch (const OptimizerError& e) {
    CHECK(std::string(e.what()).find("parameter 1") != std::string::npos);
  }
  CHECK(params[0].values()[0] == 1.0);
  CHECK(state.step_count == 0);
}

TEST_CASE("step count increases by one per step and moments match sizes") {
  std::vector<Tensor> params{Tensor::zeros({4}, true), Tensor::zeros({2, 3}, true)};
  AdamState state;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    params[0].grad()[0] = 1.0;
    adam_step(params, state, 0.1);
    CHECK(state.step_count == s);
  }
  REQUIRE(state.first_moment.size() == 2);
  CHECK(state.first_moment[1].size() == 6);
  CHECK(state.second_moment[0].size() == 4);
}
