#include <floro/numerics.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace floro;
using T = Tensor<double>;
using A = T::Array;

namespace {

A random_array(Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  A a(n);
  for (auto& v : a) v = nd(rng);
  return a;
}

T random_param(const Shape& s, std::mt19937_64& rng, double scale = 1.0) {
  return T::parameter(s, random_array(numel(s), rng, scale));
}

// Random linear readout so every output element carries a distinct upstream gradient.
T readout(const T& y, const A& w) { return weighted_sum(y, w); }

double check(const std::function<T(std::vector<T>&)>& f, std::vector<T> inputs, std::mt19937_64& rng) {
  const T probe = f(inputs);
  const A w = random_array(probe.numel(), rng);
  NamedTensors<double> params;
  for (std::size_t i = 0; i < inputs.size(); ++i) params.emplace_back("x" + std::to_string(i), inputs[i]);
  return grad_check<double>([&] { return readout(f(inputs), w); }, params, 1e-6).max_relative_error;
}

}  // namespace

TEST(Backward, SquareHasGradientSix) {
  T x = T::parameter({1}, A::Constant(1, 3.0));
  T loss = sum(mul(x, x));
  backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, RejectsSecondCall) {
  T x = T::parameter({1}, A::Constant(1, 3.0));
  T loss = sum(mul(x, x));
  backward(loss);
  EXPECT_THROW(backward(loss), ContractError);
}

TEST(Backward, RejectsStaleLeafGradient) {
  T x = T::parameter({1}, A::Constant(1, 3.0));
  backward(sum(mul(x, x)));
  EXPECT_THROW(backward(sum(mul(x, x))), ContractError);
  x.zero_grad();
  backward(sum(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, NonScalarLossRejected) {
  T x = T::parameter({2}, A::Ones(2));
  EXPECT_THROW(backward(x), ContractError);
}

TEST(Backward, ConstantGraphIsNoOp) {
  T x = T::constant({2}, A::Ones(2));
  EXPECT_NO_THROW(backward(sum(x)));
}

TEST(Backward, SharedSubexpressionAccumulates) {
  T x = T::parameter({1}, A::Constant(1, 2.0));
  T y = mul(x, x);
  backward(sum(add(y, y)));  // 2x^2 -> 4x
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
}

TEST(GradCheck, HandCentralDifference) {
  T x = T::parameter({1}, A::Constant(1, 3.0));
  NamedTensors<double> params{{"x", x}};
  const auto r = grad_check<double>([&] { return sum(mul(x, x)); }, params, 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-8);
  EXPECT_EQ(r.per_parameter_errors.size(), 1u);
  EXPECT_DOUBLE_EQ(r.max_relative_error, r.per_parameter_errors.at("x"));
}

TEST(GradCheck, DetectsWrongGradient) {
  T x = T::parameter({1}, A::Constant(1, 3.0));
  NamedTensors<double> params{{"x", x}};
  // detach() hides the dependency from backward, so the analytic gradient is half the true one
  const auto r = grad_check<double>([&] { return sum(mul(x, x.detach())); }, params, 1e-5);
  EXPECT_GT(r.max_relative_error, 0.1);
}

TEST(GradCheck, RejectsNonPositiveEpsilon) {
  T x = T::parameter({1}, A::Constant(1, 3.0));
  NamedTensors<double> params{{"x", x}};
  EXPECT_THROW(grad_check<double>([&] { return sum(x); }, params, 0.0), ContractError);
}

TEST(GradCheck, SampledCoordinates) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  A v(50);
  for (auto& e : v) e = nd(rng);
  T x = T::parameter({50}, v);
  NamedTensors<double> params{{"x", x}};
  const auto full = grad_check<double>([&] { return sum(gelu(x)); }, params, 1e-6);
  const auto all = grad_check<double>([&] { return sum(gelu(x)); }, params, 1e-6, {50, 3});
  EXPECT_EQ(full.max_relative_error, all.max_relative_error);
  const auto some = grad_check<double>([&] { return sum(gelu(x)); }, params, 1e-6, {5, 3});
  EXPECT_LE(some.max_relative_error, full.max_relative_error);
  EXPECT_GT(grad_check<double>([&] { return sum(mul(x, x.detach())); }, params, 1e-6, {5, 3}).max_relative_error,
            0.01);
  EXPECT_THROW(grad_check<double>([&] { return sum(x); }, params, 1e-6, {-1, 0}), ContractError);
}

class OpGradients : public ::testing::Test {
 protected:
  std::mt19937_64 rng{2024};
  std::uniform_int_distribution<int> dim{1, 4};
  static constexpr int kTrials = 100;
  static constexpr double kTol = 1e-6;
};

TEST_F(OpGradients, Elementwise) {
  for (int t = 0; t < kTrials; ++t) {
    const Shape s = {dim(rng), dim(rng), dim(rng)};
    auto a = random_param(s, rng), b = random_param(s, rng);
    EXPECT_LT(check([](auto& x) { return add(x[0], x[1]); }, {a, b}, rng), kTol);
    EXPECT_LT(check([](auto& x) { return sub(x[0], x[1]); }, {a, b}, rng), kTol);
    EXPECT_LT(check([](auto& x) { return mul(x[0], x[1]); }, {a, b}, rng), kTol);
    EXPECT_LT(check([](auto& x) { return scale(x[0], 0.7); }, {a}, rng), kTol);
    EXPECT_LT(check([](auto& x) { return add_scalar(x[0], -1.5); }, {a}, rng), kTol);
    const A c = random_array(a.numel(), rng);
    EXPECT_LT(check([&](auto& x) { return mul_constant(x[0], c); }, {a}, rng), kTol);
    EXPECT_LT(check([](auto& x) { return gelu(x[0]); }, {a}, rng), kTol);
  }
}

TEST_F(OpGradients, BroadcastAndReductions) {
  for (int t = 0; t < kTrials; ++t) {
    const Index n = dim(rng), m = dim(rng), k = dim(rng);
    auto a = random_param({n, m, k}, rng), b = random_param({m, k}, rng);
    EXPECT_LT(check([](auto& x) { return add_broadcast(x[0], x[1]); }, {a, b}, rng), kTol);
    EXPECT_LT(check([](auto& x) { return sum(x[0]); }, {a}, rng), kTol);
    EXPECT_LT(check([](auto& x) { return mean(x[0]); }, {a}, rng), kTol);
    EXPECT_LT(check([](auto& x) { return sum_last(x[0]); }, {a}, rng), kTol);
    const std::size_t axis = static_cast<std::size_t>(t % 3);
    EXPECT_LT(check([axis](auto& x) { return mean_axis(x[0], axis); }, {a}, rng), kTol);
  }
}

TEST_F(OpGradients, SoftmaxAndLayerNorm) {
  for (int t = 0; t < kTrials; ++t) {
    const Index n = dim(rng), k = dim(rng) + 1;
    auto a = random_param({n, k}, rng);
    auto g = random_param({k}, rng), b = random_param({k}, rng);
    EXPECT_LT(check([](auto& x) { return softmax(x[0]); }, {a}, rng), kTol);
    EXPECT_LT(check([](auto& x) { return layer_norm(x[0], x[1], x[2]); }, {a, g, b}, rng), kTol);
  }
}

TEST_F(OpGradients, MatmulPlainAndBatched) {
  for (int t = 0; t < kTrials; ++t) {
    const Index bsz = dim(rng), m = dim(rng), k = dim(rng), n = dim(rng);
    auto a = random_param({bsz, m, k}, rng), w = random_param({k, n}, rng), c = random_param({bsz, k, n}, rng);
    EXPECT_LT(check([](auto& x) { return matmul(x[0], x[1]); }, {a, w}, rng), kTol);
    EXPECT_LT(check([](auto& x) { return matmul(x[0], x[1]); }, {a, c}, rng), kTol);
  }
}

TEST_F(OpGradients, Layout) {
  for (int t = 0; t < kTrials; ++t) {
    const Index a0 = dim(rng), a1 = dim(rng), a2 = dim(rng);
    auto a = random_param({a0, a1, a2}, rng), b = random_param({a0, a1 + 1, a2}, rng);
    EXPECT_LT(check([&](auto& x) { return reshape(x[0], {a0 * a1, a2}); }, {a}, rng), kTol);
    EXPECT_LT(check([](auto& x) { return permute(x[0], {2, 0, 1}); }, {a}, rng), kTol);
    EXPECT_LT(check([](auto& x) { return transpose(x[0]); }, {a}, rng), kTol);
    EXPECT_LT(check([](auto& x) { return concat<double>({x[0], x[1]}, 1); }, {a, b}, rng), kTol);
    std::vector<Index> idx{a1 - 1, 0, a1 - 1};
    EXPECT_LT(check([&](auto& x) { return index_select(x[0], 1, std::span<const Index>(idx)); }, {a}, rng), kTol);
    EXPECT_LT(check([&](auto& x) { return slice(x[0], 1, a1, 1); }, {b}, rng), kTol);
  }
}

TEST(OpValues, MatmulMatchesLoopOracle) {
  std::mt19937_64 rng(5);
  const Index m = 3, k = 4, n = 2;
  auto a = random_param({m, k}, rng), b = random_param({k, n}, rng);
  const T c = matmul(a, b);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) {
      double s = 0.0;
      for (Index q = 0; q < k; ++q) s += a[i * k + q] * b[q * n + j];
      EXPECT_NEAR(c[i * n + j], s, 1e-14);
    }
}

TEST(OpValues, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(6);
  const T s = softmax(random_param({5, 7}, rng, 10.0));
  for (Index r = 0; r < 5; ++r) EXPECT_NEAR(s.value().segment(r * 7, 7).sum(), 1.0, 1e-14);
}

TEST(OpValues, LayerNormMatchesLoopOracle) {
  std::mt19937_64 rng(7);
  const Index rows = 3, cols = 5;
  auto x = random_param({rows, cols}, rng), g = random_param({cols}, rng), b = random_param({cols}, rng);
  const T y = layer_norm(x, g, b);
  for (Index r = 0; r < rows; ++r) {
    double mu = 0.0, var = 0.0;
    for (Index c = 0; c < cols; ++c) mu += x[r * cols + c];
    mu /= cols;
    for (Index c = 0; c < cols; ++c) var += (x[r * cols + c] - mu) * (x[r * cols + c] - mu);
    var /= cols;
    for (Index c = 0; c < cols; ++c)
      EXPECT_NEAR(y[r * cols + c], (x[r * cols + c] - mu) / std::sqrt(var + 1e-6) * g[c] + b[c], 1e-12);
  }
}

TEST(OpValues, PermuteMovesElements) {
  T a = T::constant({2, 3}, (A(6) << 0, 1, 2, 3, 4, 5).finished());
  const T p = permute(a, {1, 0});
  const A expect = (A(6) << 0, 3, 1, 4, 2, 5).finished();
  EXPECT_TRUE((p.value() == expect).all());
  EXPECT_EQ(p.shape(), (Shape{3, 2}));
}

TEST(OpErrors, ShapeAndIndexChecks) {
  T a = T::zeros({2, 3}), b = T::zeros({3, 2});
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_THROW(reshape(a, {4}), ShapeError);
  EXPECT_THROW(slice(a, 1, 2, 2), IndexError);
  std::vector<Index> bad{3};
  EXPECT_THROW(index_select(a, 1, std::span<const Index>(bad)), IndexError);
  EXPECT_THROW(T::zeros({0}), ShapeError);
  EXPECT_THROW(a.item(), ShapeError);
}
