#include "posefield/generator.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "posefield/error.hpp"

namespace posefield {

namespace {

// Strict-upper-triangle coordinates of one s×s block, in parameter order.
std::vector<std::pair<std::size_t, std::size_t>> upper_pairs(std::size_t s) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(s * (s - 1) / 2);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i + 1; j < s; ++j) pairs.emplace_back(i, j);
  return pairs;
}

}  // namespace

std::size_t GeneratorMatrix::param_count(std::size_t dim, std::size_t block_size) {
  return (dim / block_size) * block_size * (block_size - 1) / 2;
}

GeneratorMatrix::GeneratorMatrix(std::size_t dim, std::size_t block_size)
    : dim_(dim), block_(block_size) {
  if (dim == 0 || block_size < 2 || dim % block_size != 0) {
    throw ConfigError("generator block size " + std::to_string(block_size) +
                      " must be at least 2 and divide dimension " + std::to_string(dim));
  }
  params_ = ad::Tensor::zeros({param_count(dim, block_size)}, true);
}

GeneratorMatrix GeneratorMatrix::random(std::size_t dim, std::size_t block_size, Rng& rng,
                                        double stddev) {
  GeneratorMatrix gen(dim, block_size);
  for (auto& p : gen.params_.values()) p = gaussian(rng, 0.0, stddev);
  return gen;
}

ad::Tensor GeneratorMatrix::materialize() const {
  const std::size_t d = dim_, s = block_;
  const auto pairs = upper_pairs(s);
  const std::size_t per_block = pairs.size();
  std::vector<double> out(d * d, 0.0);
  auto pv = params_.values();
  for (std::size_t b = 0; b < block_count(); ++b) {
    const std::size_t o = b * s;
    for (std::size_t q = 0; q < per_block; ++q) {
      const auto [i, j] = pairs[q];
      const double value = pv[b * per_block + q];
      out[(o + i) * d + o + j] = value;
      out[(o + j) * d + o + i] = -value;
    }
  }
  return ad::make_result({d, d}, std::move(out), {params_}, [d, s, pairs](const ad::Node& node) {
    auto& g = node.parents[0]->grad;
    const std::size_t per_block = pairs.size();
    for (std::size_t b = 0; b < d / s; ++b) {
      const std::size_t o = b * s;
      for (std::size_t q = 0; q < per_block; ++q) {
        const auto [i, j] = pairs[q];
        g[b * per_block + q] += node.grad[(o + i) * d + o + j] - node.grad[(o + j) * d + o + i];
      }
    }
  });
}

Matrix GeneratorMatrix::matrix() const {
  ad::NoGradGuard guard;
  const ad::Tensor m = materialize();
  return Eigen::Map<const Matrix>(m.values().data(), static_cast<Eigen::Index>(dim_),
                                  static_cast<Eigen::Index>(dim_));
}

Matrix expm(const Matrix& a) {
  const auto n = a.rows();
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.25) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.25)));
  const Matrix scaled = a / std::ldexp(1.0, squarings);

  // Horner evaluation of sum_{k<=18} X^k / k!.
  constexpr int kDegree = 18;
  Matrix result = Matrix::Identity(n, n);
  for (int k = kDegree; k >= 1; --k) {
    result = Matrix::Identity(n, n) + (scaled * result) / static_cast<double>(k);
  }
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

Matrix lie_exp(const Matrix& generator, double delta, std::size_t block_size) {
  const auto d = generator.rows();
  const auto s = static_cast<Eigen::Index>(block_size);
  if (generator.cols() != d || block_size == 0 || d % s != 0) {
    throw ShapeError("lie_exp: generator " + std::to_string(d) + "x" +
                     std::to_string(generator.cols()) + " incompatible with block size " +
                     std::to_string(block_size));
  }
  Matrix out = Matrix::Zero(d, d);
  for (Eigen::Index o = 0; o < d; o += s) {
    out.block(o, o, s, s) = expm(generator.block(o, o, s, s) * delta);
  }
  return out;
}

Matrix lie_exp(const GeneratorMatrix& gen, double delta) {
  return lie_exp(gen.matrix(), delta, gen.block_size());
}

ad::Tensor taylor_rotate_rows(const ad::Tensor& rows, const ad::Tensor& generator_t,
                              std::span<const double> deltas) {
  std::vector<double> half_sq(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) half_sq[i] = 0.5 * deltas[i] * deltas[i];
  const ad::Tensor once = ad::matmul(rows, generator_t);
  const ad::Tensor twice = ad::matmul(once, generator_t);
  return ad::add(rows, ad::add(ad::row_scale(once, deltas), ad::row_scale(twice, half_sq)));
}

ad::Tensor taylor_rotate(const GeneratorMatrix& gen, double delta, const ad::Tensor& v) {
  if (v.numel() != gen.dim()) {
    throw ShapeError("taylor_rotate: vector " + ad::to_string(v.shape()) + " for generator of dim " +
                     std::to_string(gen.dim()));
  }
  const ad::Tensor row = v.shape().size() == 2 ? v : ad::reshape(v, {1, gen.dim()});
  const double deltas[] = {delta};
  return taylor_rotate_rows(row, ad::transpose(gen.materialize()), deltas);
}

Vector taylor_rotate(const Matrix& generator, double delta, const Vector& v) {
  const Vector once = generator * v;
  const Vector twice = generator * once;
  return v + delta * once + (0.5 * delta * delta) * twice;
}

}  // namespace posefield
