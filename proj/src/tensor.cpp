#include "posefield/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "posefield/error.hpp"

namespace posefield::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                   to_string(b));
}

void require_2d(const char* op, const Tensor& t) {
  if (t.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + to_string(t.shape()));
  }
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

Node& parent(const Node& out, std::size_t i) { return *out.parents[i]; }

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() : node_(std::make_shared<Node>()) { node_->shape = {0}; }

Tensor::Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from(shape, std::vector<double>(ad::numel(shape), 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive: " + to_string(shape));
  }
  if (values.size() != ad::numel(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     to_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->grad.assign(values.size(), 0.0);
  node->value = std::move(values);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }

std::size_t Tensor::rows() const {
  require_2d("rows", *this);
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require_2d("cols", *this);
  return node_->shape[1];
}

std::span<double> Tensor::values() { return node_->value; }
std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::grad() { return node_->grad; }
std::span<const double> Tensor::grad() const { return node_->grad; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->value[r * cols() + c];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }
bool Tensor::is_leaf() const { return !node_->backward; }

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

void Tensor::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Post-order DFS gives a topological order with parents before children.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->backward) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

// ---- graph recording -------------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->grad.assign(values.size(), 0.0);
  node->value = std::move(values);
  const bool track =
      g_grad_enabled &&
      std::any_of(parents.begin(), parents.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) shape_fail("matmul", a.shape(), b.shape());
  std::vector<double> out(m * n);
  Map(out.data(), m, n).noalias() = MapC(a.values().data(), m, k) * MapC(b.values().data(), k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](const Node& o) {
    Node& pa = parent(o, 0);
    Node& pb = parent(o, 1);
    MapC g(o.grad.data(), m, n);
    if (pa.requires_grad) {
      Map(pa.grad.data(), m, k).noalias() += g * MapC(pb.value.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      Map(pb.grad.data(), k, n).noalias() += MapC(pa.value.data(), m, k).transpose() * g;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_2d("transpose", a);
  const auto m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  Map(out.data(), n, m) = MapC(a.values().data(), m, n).transpose();
  return make_result({n, m}, std::move(out), {a}, [m, n](const Node& o) {
    Map(parent(o, 0).grad.data(), m, n) += MapC(o.grad.data(), n, m).transpose();
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (ad::numel(shape) != a.numel()) shape_fail("reshape", a.shape(), shape);
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), {a}, [](const Node& o) {
    auto& g = parent(o, 0).grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](const Node& o) {
    for (std::size_t p = 0; p < 2; ++p) {
      Node& n = parent(o, p);
      if (!n.requires_grad) continue;
      for (std::size_t i = 0; i < o.grad.size(); ++i) n.grad[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](const Node& o) {
    Node& na = parent(o, 0);
    Node& nb = parent(o, 1);
    if (na.requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) na.grad[i] += o.grad[i];
    if (nb.requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) nb.grad[i] -= o.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](const Node& o) {
    Node& na = parent(o, 0);
    Node& nb = parent(o, 1);
    if (na.requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) na.grad[i] += o.grad[i] * nb.value[i];
    if (nb.requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) nb.grad[i] += o.grad[i] * na.value[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](const Node& o) {
    auto& g = parent(o, 0).grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
  });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : slope * av[i];
  return make_result(a.shape(), std::move(out), {a}, [slope](const Node& o) {
    Node& n = parent(o, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      n.grad[i] += o.grad[i] * (n.value[i] > 0.0 ? 1.0 : slope);
    }
  });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  return make_result(a.shape(), std::move(out), {a}, [](const Node& o) {
    auto& g = parent(o, 0).grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * (1.0 - o.value[i] * o.value[i]);
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Split by sign so exp never overflows.
    const double x = av[i];
    if (x >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  return make_result(a.shape(), std::move(out), {a}, [](const Node& o) {
    auto& g = parent(o, 0).grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * o.value[i] * (1.0 - o.value[i]);
  });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  require_2d("add_bias", x);
  const auto n = x.rows(), m = x.cols();
  if (b.numel() != m) shape_fail("add_bias", x.shape(), b.shape());
  std::vector<double> out(x.values().begin(), x.values().end());
  auto bv = b.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] += bv[c];
  return make_result(x.shape(), std::move(out), {x, b}, [n, m](const Node& o) {
    Node& nx = parent(o, 0);
    Node& nb = parent(o, 1);
    if (nx.requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) nx.grad[i] += o.grad[i];
    if (nb.requires_grad)
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) nb.grad[c] += o.grad[r * m + c];
  });
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result({1}, {s}, {a}, [](const Node& o) {
    auto& g = parent(o, 0).grad;
    for (auto& gi : g) gi += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_squares(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return make_result({1}, {s}, {a}, [](const Node& o) {
    Node& n = parent(o, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.grad[i] += 2.0 * n.value[i] * o.grad[0];
  });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require_same("mse_loss", pred, target);
  const double count = static_cast<double>(pred.numel());
  auto pv = pred.values(), tv = target.values();
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - tv[i];
    s += d * d;
  }
  return make_result({1}, {s / count}, {pred, target}, [count](const Node& o) {
    Node& np = parent(o, 0);
    Node& nt = parent(o, 1);
    const double g = o.grad[0] * 2.0 / count;
    for (std::size_t i = 0; i < np.value.size(); ++i) {
      const double d = g * (np.value[i] - nt.value[i]);
      if (np.requires_grad) np.grad[i] += d;
      if (nt.requires_grad) nt.grad[i] -= d;
    }
  });
}

// ---- structural ------------------------------------------------------------

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  require_2d("gather_rows", a);
  const auto n = a.rows(), m = a.cols();
  if (index.empty()) throw ShapeError("gather_rows: empty index list");
  std::vector<double> out(index.size() * m);
  auto av = a.values();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n) {
      throw ShapeError("gather_rows: row " + std::to_string(index[i]) + " out of " +
                       to_string(a.shape()));
    }
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(index[i] * m), m,
                out.begin() + static_cast<std::ptrdiff_t>(i * m));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result({index.size(), m}, std::move(out), {a},
                     [idx = std::move(idx), m](const Node& o) {
                       auto& g = parent(o, 0).grad;
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t c = 0; c < m; ++c) g[idx[i] * m + c] += o.grad[i * m + c];
                     });
}

Tensor row_scale(const Tensor& a, std::span<const double> factors) {
  require_2d("row_scale", a);
  const auto n = a.rows(), m = a.cols();
  if (factors.size() != n) {
    throw ShapeError("row_scale: " + std::to_string(factors.size()) + " factors for " +
                     to_string(a.shape()));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] *= factors[r];
  std::vector<double> f(factors.begin(), factors.end());
  return make_result(a.shape(), std::move(out), {a}, [f = std::move(f), m](const Node& o) {
    auto& g = parent(o, 0).grad;
    for (std::size_t r = 0; r < f.size(); ++r)
      for (std::size_t c = 0; c < m; ++c) g[r * m + c] += o.grad[r * m + c] * f[r];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const auto n = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) shape_fail("concat_cols", parts.front().shape(), p.shape());
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].values();
    for (std::size_t r = 0; r < n; ++r)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    offset += widths[k];
  }
  return make_result({n, total}, std::move(out), parts, [widths, n, total](const Node& o) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = parent(o, k);
      if (p.requires_grad) {
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c)
            p.grad[r * widths[k] + c] += o.grad[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  const auto m = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != m) shape_fail("concat_rows", parts.front().shape(), p.shape());
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * m);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_result({total, m}, std::move(out), parts, [](const Node& o) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < o.parents.size(); ++k) {
      Node& p = parent(o, k);
      if (p.requires_grad)
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += o.grad[off + i];
      off += p.value.size();
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_2d("slice_cols", a);
  const auto n = a.rows(), m = a.cols();
  if (count == 0 || begin + count > m) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " + to_string(a.shape()));
  }
  std::vector<double> out(n * count);
  auto av = a.values();
  for (std::size_t r = 0; r < n; ++r)
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(r * m + begin), count,
                out.begin() + static_cast<std::ptrdiff_t>(r * count));
  return make_result({n, count}, std::move(out), {a}, [n, m, begin, count](const Node& o) {
    auto& g = parent(o, 0).grad;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < count; ++c) g[r * m + begin + c] += o.grad[r * count + c];
  });
}

Tensor bank_rowmul(const Tensor& v, const Tensor& bank, std::span<const std::size_t> index) {
  require_2d("bank_rowmul", v);
  require_2d("bank_rowmul", bank);
  const auto p_count = v.rows(), d = v.cols(), e = bank.cols();
  if (bank.rows() % d != 0 || index.size() != p_count) {
    shape_fail("bank_rowmul", v.shape(), bank.shape());
  }
  const auto k_count = bank.rows() / d;
  std::vector<double> out(p_count * e);
  auto vv = v.values(), bv = bank.values();
  for (std::size_t p = 0; p < p_count; ++p) {
    if (index[p] >= k_count) {
      throw ShapeError("bank_rowmul: bank entry " + std::to_string(index[p]) + " out of " +
                       std::to_string(k_count));
    }
    Map(out.data() + p * e, 1, e).noalias() =
        MapC(vv.data() + p * d, 1, d) * MapC(bv.data() + index[p] * d * e, d, e);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result({p_count, e}, std::move(out), {v, bank},
                     [idx = std::move(idx), d, e](const Node& o) {
                       Node& nv = parent(o, 0);
                       Node& nb = parent(o, 1);
                       for (std::size_t p = 0; p < idx.size(); ++p) {
                         MapC g(o.grad.data() + p * e, 1, e);
                         if (nv.requires_grad) {
                           Map(nv.grad.data() + p * d, 1, d).noalias() +=
                               g * MapC(nb.value.data() + idx[p] * d * e, d, e).transpose();
                         }
                         if (nb.requires_grad) {
                           Map(nb.grad.data() + idx[p] * d * e, d, e).noalias() +=
                               MapC(nv.value.data() + p * d, 1, d).transpose() * g;
                         }
                       }
                     });
}

}  // namespace posefield::ad
