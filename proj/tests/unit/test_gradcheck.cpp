#include <doctest.h>

#include <vector>

#include "posefield/error.hpp"
#include "posefield/gradcheck.hpp"
#include "support.hpp"

using namespace posefield;
using ad::Tensor;

TEST_CASE("linear loss agrees almost exactly") {
  Rng rng = make_rng(31);
  std::vector<Tensor> params{testing_support::random_tensor({6}, rng)};
  const Tensor x = testing_support::random_tensor({6}, rng, false);
  const auto report =
      check_gradients(params, [&] { return ad::sum(ad::mul(params[0], x)); });
  CHECK(report.ok());
  CHECK(report.max() < 1e-8);
}

TEST_CASE("a wrong gradient is flagged") {
  std::vector<Tensor> params{Tensor::from({2}, {0.3, -0.4}, true)};
  // Forward is x², but the backward claims 3x.
  auto broken = [&] {
    const Tensor& x = params[0];
    std::vector<double> out(2);
    for (std::size_t i = 0; i < 2; ++i) out[i] = x.values()[i] * x.values()[i];
    const Tensor sq = ad::make_result({2}, out, {x}, [](const ad::Node& n) {
      auto& parent = *n.parents[0];
      for (std::size_t i = 0; i < 2; ++i) parent.grad[i] += n.grad[i] * 3.0 * parent.value[i];
    });
    return ad::sum(sq);
  };
  const auto report = check_gradients(params, broken);
  CHECK_FALSE(report.ok());
  CHECK(report.flagged.size() == 2);
}

TEST_CASE("a non-deterministic loss raises") {
  std::vector<Tensor> params{Tensor::from({1}, {1.0}, true)};
  int calls = 0;
  auto flaky = [&] { return ad::scale(ad::sum(params[0]), 1.0 + 1e-3 * ++calls); };
  CHECK_THROWS_AS(check_gradients(params, flaky), DeterminismError);
}

TEST_CASE("values and gradients are restored") {
  std::vector<Tensor> params{Tensor::from({2}, {1.0, 2.0}, true)};
  params[0].grad()[0] = 7.0;
  (void)check_gradients(params, [&] { return ad::sum_squares(params[0]); });
  CHECK(params[0].values()[0] == 1.0);
  CHECK(params[0].values()[1] == 2.0);
  CHECK(params[0].grad()[0] == 7.0);
  CHECK(params[0].grad()[1] == 0.0);
}
