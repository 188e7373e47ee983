#include <doctest.h>

#include <cmath>
#include <string>

#include "posefield/error.hpp"
#include "posefield/tensor.hpp"
#include "support.hpp"

using namespace posefield;
using ad::Tensor;
using testing_support::max_rel_error;
using testing_support::numeric_grad;
using testing_support::random_tensor;

namespace {

// Loss = <w, op(x)> with fixed random weights, so every output element matters.
double check_unary(const std::function<Tensor(const Tensor&)>& op, Tensor x, Rng& rng) {
  const Tensor probe = op(x);
  const Tensor w = random_tensor(probe.shape(), rng, false);
  auto loss = [&] { return ad::sum(ad::mul(op(x), w)); };
  x.zero_grad();
  loss().backward();
  std::vector<double> analytic(x.grad().begin(), x.grad().end());
  const auto numeric = numeric_grad(x, [&] { return loss().item(); });
  return max_rel_error(analytic, numeric);
}

}  // namespace

TEST_CASE("matmul forward and identity") {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor v = Tensor::from({2, 1}, {3, -4});
  const Tensor iv = ad::matmul(eye, v);
  CHECK(iv.values()[0] == 3.0);
  CHECK(iv.values()[1] == -4.0);

  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::from({2, 1}, {1, 0});
  const Tensor ab = ad::matmul(a, b);
  CHECK(ab.values()[0] == 1.0);
  CHECK(ab.values()[1] == 3.0);
}

TEST_CASE("matmul shape error names both shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({2, 3});
  try {
    (void)ad::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradients match central differences") {
  Rng rng = make_rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor({5, 4}, rng);
    Tensor b = random_tensor({4, 3}, rng);
    const Tensor w = random_tensor({5, 3}, rng, false);
    auto loss = [&] { return ad::sum(ad::mul(ad::matmul(a, b), w)); };
    a.zero_grad();
    b.zero_grad();
    loss().backward();
    std::vector<double> ga(a.grad().begin(), a.grad().end());
    std::vector<double> gb(b.grad().begin(), b.grad().end());
    CHECK(max_rel_error(ga, numeric_grad(a, [&] { return loss().item(); })) < 1e-6);
    CHECK(max_rel_error(gb, numeric_grad(b, [&] { return loss().item(); })) < 1e-6);
  }
}

TEST_CASE("elementwise forward values") {
  const Tensor x = Tensor::from({1, 3}, {1.5, -2, 0});
  const Tensor z = Tensor::zeros({1, 3});
  const Tensor s = ad::add(x, z);
  for (std::size_t i = 0; i < 3; ++i) CHECK(s.values()[i] == x.values()[i]);
  CHECK(ad::leaky_relu(Tensor::scalar(-2.0), 0.1).item() == doctest::Approx(-0.2));
  CHECK(ad::sub(x, x).values()[0] == 0.0);
  CHECK(ad::scale(x, 2.0).values()[1] == -4.0);
  CHECK(ad::mul(x, x).values()[0] == 2.25);
}

TEST_CASE("leaky_relu derivative at zero equals slope") {
  Tensor x = Tensor::scalar(0.0, true);
  ad::leaky_relu(x, 0.25).backward();
  CHECK(x.grad()[0] == 0.25);
}

TEST_CASE("elementwise ops reject mismatched shapes") {
  const Tensor a = Tensor::zeros({2, 2});
  const Tensor b = Tensor::zeros({4});
  CHECK_THROWS_AS((void)ad::add(a, b), ShapeError);
  CHECK_THROWS_AS((void)ad::sub(a, b), ShapeError);
  CHECK_THROWS_AS((void)ad::mul(a, b), ShapeError);
  CHECK_THROWS_AS((void)ad::mse_loss(a, b), ShapeError);
}

TEST_CASE("unary and reduction gradients over random instances") {
  Rng rng = make_rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor other = random_tensor({3, 4}, rng, false);
    const std::vector<std::size_t> idx{2, 0, 2, 1};
    const std::vector<double> factors{0.5, -1.5, 2.0};
    const Tensor bias = random_tensor({1, 4}, rng, false);
    CHECK(check_unary([](const Tensor& t) { return ad::tanh(t); }, random_tensor({3, 4}, rng), rng) <
          1e-6);
    CHECK(check_unary([](const Tensor& t) { return ad::sigmoid(t); }, random_tensor({3, 4}, rng),
                      rng) < 1e-6);
    CHECK(check_unary([](const Tensor& t) { return ad::leaky_relu(t); },
                      random_tensor({3, 4}, rng), rng) < 1e-6);
    CHECK(check_unary([&](const Tensor& t) { return ad::mul(t, other); },
                      random_tensor({3, 4}, rng), rng) < 1e-6);
    CHECK(check_unary([&](const Tensor& t) { return ad::sub(other, t); },
                      random_tensor({3, 4}, rng), rng) < 1e-6);
    CHECK(check_unary([](const Tensor& t) { return ad::scale(t, -0.7); },
                      random_tensor({3, 4}, rng), rng) < 1e-6);
    CHECK(check_unary([](const Tensor& t) { return ad::transpose(t); },
                      random_tensor({3, 4}, rng), rng) < 1e-6);
    CHECK(check_unary([](const Tensor& t) { return ad::reshape(t, {4, 3}); },
                      random_tensor({3, 4}, rng), rng) < 1e-6);
    CHECK(check_unary([&](const Tensor& t) { return ad::gather_rows(t, idx); },
                      random_tensor({3, 4}, rng), rng) < 1e-6);
    CHECK(check_unary([&](const Tensor& t) { return ad::row_scale(t, factors); },
                      random_tensor({3, 4}, rng), rng) < 1e-6);
    CHECK(check_unary([&](const Tensor& t) { return ad::add_bias(other, t); },
                      random_tensor({1, 4}, rng), rng) < 1e-6);
    CHECK(check_unary([&](const Tensor& t) { return ad::add_bias(t, bias); },
                      random_tensor({3, 4}, rng), rng) < 1e-6);
    CHECK(check_unary([](const Tensor& t) { return ad::sum_squares(t); },
                      random_tensor({3, 4}, rng), rng) < 1e-6);
    CHECK(check_unary([](const Tensor& t) { return ad::mean(t); }, random_tensor({3, 4}, rng),
                      rng) < 1e-6);
    CHECK(check_unary([&](const Tensor& t) { return ad::concat_cols({t, other, t}); },
                      random_tensor({3, 2}, rng), rng) < 1e-6);
    CHECK(check_unary([&](const Tensor& t) { return ad::concat_rows({other, t}); },
                      random_tensor({2, 4}, rng), rng) < 1e-6);
    CHECK(check_unary([](const Tensor& t) { return ad::slice_cols(t, 1, 2); },
                      random_tensor({3, 4}, rng), rng) < 1e-6);
  }
}

TEST_CASE("bank_rowmul gradients") {
  Rng rng = make_rng(13);
  const std::vector<std::size_t> index{1, 0, 1};
  for (int trial = 0; trial < 20; ++trial) {
    Tensor v = random_tensor({3, 2}, rng);
    Tensor bank = random_tensor({4, 3}, rng);  // two stacked 2×3 matrices
    const Tensor w = random_tensor({3, 3}, rng, false);
    auto loss = [&] { return ad::sum(ad::mul(ad::bank_rowmul(v, bank, index), w)); };
    v.zero_grad();
    bank.zero_grad();
    loss().backward();
    std::vector<double> gv(v.grad().begin(), v.grad().end());
    std::vector<double> gb(bank.grad().begin(), bank.grad().end());
    CHECK(max_rel_error(gv, numeric_grad(v, [&] { return loss().item(); })) < 1e-6);
    CHECK(max_rel_error(gb, numeric_grad(bank, [&] { return loss().item(); })) < 1e-6);
  }
  // Forward against an explicit product.
  const Tensor v = Tensor::from({1, 2}, {1, 2});
  const Tensor bank = Tensor::from({4, 1}, {1, 1, 3, 5});
  const std::vector<std::size_t> second{1};
  CHECK(ad::bank_rowmul(v, bank, second).item() == 13.0);
}

TEST_CASE("mse_loss values and gradient") {
  const Tensor p = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(ad::mse_loss(p, p).item() == 0.0);
  const Tensor t = Tensor::from({2, 2}, {0.9, 1.9, 2.9, 3.9});
  CHECK(ad::mse_loss(p, t).item() == doctest::Approx(0.01).epsilon(1e-12));

  Rng rng = make_rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor pred = random_tensor({10}, rng);
    const Tensor target = random_tensor({10}, rng, false);
    pred.zero_grad();
    ad::mse_loss(pred, target).backward();
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(pred.grad()[i] ==
            doctest::Approx(2.0 * (pred.values()[i] - target.values()[i]) / 10.0).epsilon(1e-12));
    }
    std::vector<double> g(pred.grad().begin(), pred.grad().end());
    CHECK(max_rel_error(g, numeric_grad(pred, [&] { return ad::mse_loss(pred, target).item(); })) <
          1e-6);
  }
}

TEST_CASE("backward on sum gives ones and accumulates across calls") {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  const Tensor loss = ad::sum(x);
  loss.backward();
  for (double g : x.grad()) CHECK(g == 1.0);
  loss.backward();
  for (double g : x.grad()) CHECK(g == 2.0);
  x.zero_grad();
  for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward rejects a non-scalar loss") {
  const Tensor x = Tensor::zeros({2, 2}, true);
  CHECK_THROWS_AS(ad::scale(x, 2.0).backward(), ContractError);
}

TEST_CASE("mse of a linear map has the analytic weight gradient") {
  Rng rng = make_rng(15);
  Tensor w = random_tensor({3, 4}, rng);
  const Tensor v = random_tensor({4, 1}, rng, false);
  const Tensor t = random_tensor({3, 1}, rng, false);
  const Tensor wv = ad::matmul(w, v);
  ad::mse_loss(wv, t).backward();
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      const double expected = 2.0 / 3.0 * (wv.values()[r] - t.values()[r]) * v.values()[c];
      CHECK(w.grad()[r * 4 + c] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("a shared input sums the contributions of both consumers") {
  // loss = sum(x∘x) + sum(3x) → d/dx = 2x + 3
  Tensor x = Tensor::from({1, 3}, {0.5, -1.0, 2.0}, true);
  const Tensor loss = ad::add(ad::sum(ad::mul(x, x)), ad::sum(ad::scale(x, 3.0)));
  loss.backward();
  for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == 2.0 * x.values()[i] + 3.0);
}

TEST_CASE("three-layer perceptron gradients") {
  Rng rng = make_rng(16);
  Tensor w1 = random_tensor({5, 6}, rng), b1 = random_tensor({1, 6}, rng);
  Tensor w2 = random_tensor({6, 4}, rng), b2 = random_tensor({1, 4}, rng);
  Tensor w3 = random_tensor({4, 2}, rng), b3 = random_tensor({1, 2}, rng);
  const Tensor x = random_tensor({3, 5}, rng, false);
  const Tensor t = random_tensor({3, 2}, rng, false);
  auto loss = [&] {
    Tensor h = ad::leaky_relu(ad::add_bias(ad::matmul(x, w1), b1));
    h = ad::tanh(ad::add_bias(ad::matmul(h, w2), b2));
    return ad::mse_loss(ad::sigmoid(ad::add_bias(ad::matmul(h, w3), b3)), t);
  };
  std::vector<Tensor*> params{&w1, &b1, &w2, &b2, &w3, &b3};
  for (auto* p : params) p->zero_grad();
  loss().backward();
  for (auto* p : params) {
    std::vector<double> g(p->grad().begin(), p->grad().end());
    CHECK(max_rel_error(g, numeric_grad(*p, [&] { return loss().item(); }, 1e-5)) < 1e-4);
  }
}

TEST_CASE("forward computations are bitwise deterministic") {
  auto run = [] {
    Rng rng = make_rng(17);
    const Tensor a = random_tensor({7, 9}, rng);
    const Tensor b = random_tensor({9, 5}, rng);
    return ad::sigmoid(ad::matmul(a, b));
  };
  const Tensor r1 = run();
  const Tensor r2 = run();
  for (std::size_t i = 0; i < r1.numel(); ++i) CHECK(r1.values()[i] == r2.values()[i]);
}

TEST_CASE("no-grad guard stops graph recording") {
  const Tensor x = Tensor::zeros({2}, true);
  {
    ad::NoGradGuard guard;
    CHECK_FALSE(ad::grad_enabled());
    CHECK(ad::scale(x, 2.0).is_leaf());
  }
  CHECK(ad::grad_enabled());
  CHECK_FALSE(ad::scale(x, 2.0).is_leaf());
}
