#include "catch_amalgamated.hpp"

#include <random>

#include "oracles.hpp"
#include "spasvc/autograd.hpp"
#include "spasvc/nn.hpp"

using namespace spasvc;
using ag::Mat;
using ag::Var;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Checks d(sum(w .* f(x)))/dx against central differences.
void check_unary(const std::function<Var(const Var&)>& f, const Mat& x0, double tol = 1e-6) {
  const Mat w = random_mat(f(ag::constant(x0)).rows(), f(ag::constant(x0)).cols(), 99);
  auto scalar = [&](const Mat& x) { return f(ag::constant(x)).value().cwiseProduct(w).sum(); };
  Var x = ag::parameter(x0);
  ag::backward(ag::sum(ag::mul(f(x), ag::constant(w))));
  const Mat num = oracle::numeric_gradient(scalar, x0, 1e-5);
  REQUIRE(oracle::max_relative_error(x.grad(), num, 1e-4) < tol * 1e3);
}

}  // namespace

TEST_CASE("elementwise ops have correct gradients", "[autograd]") {
  const Mat x = random_mat(4, 3, 1);
  check_unary([](const Var& v) { return ag::tanh(v); }, x);
  check_unary([](const Var& v) { return ag::sigmoid(v); }, x);
  check_unary([](const Var& v) { return ag::mish(v); }, x);
  check_unary([](const Var& v) { return ag::exp_sigmoid(v); }, x);
  check_unary([](const Var& v) { return ag::scale(ag::add_scalar(v, 0.3), -2.0); }, x);
  check_unary([](const Var& v) { return ag::mul(v, v); }, x);
}

TEST_CASE("structural ops have correct gradients", "[autograd]") {
  const Mat x = random_mat(5, 6, 2);
  const Mat w = random_mat(6, 4, 3);
  check_unary([&](const Var& v) { return ag::matmul(v, ag::constant(w)); }, x);
  check_unary([](const Var& v) { return ag::slice_cols(v, 2, 3); }, x);
  check_unary([](const Var& v) { return ag::broadcast_rows(ag::select_row(v, 3), 7); }, x);
  check_unary([&](const Var& v) { return ag::add_row(v, ag::constant(random_mat(1, 6, 4))); }, x);
  check_unary([](const Var& v) { return ag::mse(v, ag::constant(Mat::Ones(5, 6))); }, x);
}

TEST_CASE("linear and dilated conv1d gradients match finite differences", "[autograd][nn]") {
  const Mat x = random_mat(9, 3, 5);
  const Mat w = random_mat(3 * 3, 4, 6);
  const Mat b = random_mat(1, 4, 7);
  for (int dilation : {1, 2, 4}) {
    check_unary([&](const Var& v) { return ag::conv1d(v, ag::constant(w), ag::constant(b), 3, dilation); }, x);
    check_unary([&](const Var& v) { return ag::conv1d(ag::constant(x), v, ag::constant(b), 3, dilation); }, w);
  }
  check_unary([&](const Var& v) { return ag::linear(v, ag::constant(random_mat(3, 2, 8)), ag::constant(b.leftCols(2))); }, x);
}

TEST_CASE("conv1d matches a direct same-padded convolution", "[autograd][nn]") {
  const Mat x = random_mat(7, 2, 9);
  const Mat w = random_mat(3 * 2, 3, 10);  // rows ordered (tap, in_channel)
  const Mat b = Mat::Zero(1, 3);
  const int dilation = 2;
  const Mat y = ag::conv1d(ag::constant(x), ag::constant(w), ag::constant(b), 3, dilation).value();
  for (int t = 0; t < 7; ++t)
    for (int o = 0; o < 3; ++o) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) {
        const int src = t + (k - 1) * dilation;
        if (src < 0 || src >= 7) continue;
        for (int c = 0; c < 2; ++c) acc += x(src, c) * w(k * 2 + c, o);
      }
      REQUIRE(y(t, o) == Catch::Approx(acc).margin(1e-12));
    }
}

TEST_CASE("no-grad mode records no graph", "[autograd]") {
  Var p = ag::parameter(Mat::Ones(2, 2));
  ag::NoGradGuard guard;
  Var y = ag::tanh(p);
  REQUIRE_FALSE(y.requires_grad());
}

TEST_CASE("gradients accumulate over shared subexpressions", "[autograd]") {
  Var p = ag::parameter(Mat::Constant(1, 1, 3.0));
  Var y = ag::mul(p, p) + ag::scale(p, 2.0);  // y = p^2 + 2p
  ag::backward(ag::sum(y));
  REQUIRE(p.grad()(0, 0) == Catch::Approx(8.0));
}

TEST_CASE("AdamW takes a bias-corrected first step of size lr", "[nn]") {
  nn::ParameterStore store;
  Var p = store.add("p", Mat::Constant(1, 2, 1.0));
  ag::backward(ag::sum(ag::mul(p, ag::constant(Mat::Constant(1, 2, 0.5)))));
  nn::AdamW opt(nn::AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
  opt.step(store);
  // With bias correction the first update is lr * g / |g|.
  REQUIRE(p.value()(0, 0) == Catch::Approx(0.9).margin(1e-6));
  REQUIRE(opt.steps_taken() == 1);
}

TEST_CASE("StepLR halves the rate every step_size steps", "[nn]") {
  REQUIRE(nn::step_lr(1.5e-4, 0.5, 10000, 0) == 1.5e-4);
  REQUIRE(nn::step_lr(1.5e-4, 0.5, 10000, 9999) == 1.5e-4);
  REQUIRE(nn::step_lr(1.5e-4, 0.5, 10000, 10000) == Catch::Approx(0.75e-4));
  REQUIRE(nn::step_lr(1.5e-4, 0.5, 10000, 20000) == Catch::Approx(0.375e-4));
}
