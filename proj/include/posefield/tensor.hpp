#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace posefield::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct Node;

/// Propagates `out.grad` into the gradients of `out.parents`.
using BackwardFn = std::function<void(const Node& out)>;

/// One vertex of the differentiation graph. Interior nodes own their parents,
/// so a loss keeps the whole graph that produced it alive until it is dropped.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

/// Dense row-major tensor of 64-bit floats taking part in reverse-mode
/// differentiation. Copies share the underlying node (handle semantics).
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t rows() const;  // extent of dim 0 of a 2-D tensor
  std::size_t cols() const;  // extent of dim 1 of a 2-D tensor

  std::span<double> values();
  std::span<const double> values() const;
  std::span<double> grad();
  std::span<const double> grad() const;

  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;
  void zero_grad();

  /// Reverse sweep from a scalar. Leaf gradients accumulate across calls;
  /// interior gradients are recomputed each time.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

/// Builds an op result. The node records `parents` and `backward` only when
/// gradient recording is enabled and some parent requires a gradient.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   BackwardFn backward);

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

inline constexpr double kDefaultLeakySlope = 0.1;
/// Derivative at exactly zero is `slope`.
Tensor leaky_relu(const Tensor& a, double slope = kDefaultLeakySlope);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

/// x[n×m] + b broadcast over rows; b has m elements.
Tensor add_bias(const Tensor& x, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_squares(const Tensor& a);
Tensor mse_loss(const Tensor& pred, const Tensor& target);

/// Rows `index[i]` of a 2-D tensor; backward scatter-adds.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
/// Multiplies row i by the constant factors[i].
Tensor row_scale(const Tensor& a, std::span<const double> factors);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);

/// Row-wise product against a stacked bank of matrices:
/// out[p] = v[p] · bank[index[p]], where `bank` is (K·d)×e and v is P×d.
Tensor bank_rowmul(const Tensor& v, const Tensor& bank, std::span<const std::size_t> index);

}  // namespace posefield::ad
