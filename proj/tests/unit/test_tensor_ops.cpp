#include <cmath>

#include "bwn/ops.hpp"
#include "bwn/oracles.hpp"
#include "helpers.hpp"

using namespace bwn;
using bwn::test::max_abs_diff;
using bwn::test::random_tensor;
using bwn::test::random_tensor_d;

namespace {

// Independent triple loop for the affine map.
TensorD linear_naive(const TensorD& x, const TensorD& w, const TensorD* b) {
  const std::size_t N = x.dim(0), D = x.dim(1), K = w.dim(0);
  TensorD out({N, K});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < K; ++k) {
      double s = b ? (*b)[k] : 0.0;
      for (std::size_t d = 0; d < D; ++d) s += x[n * D + d] * w[k * D + d];
      out[n * K + k] = s;
    }
  return out;
}

// Finite-difference gradient of sum(upstream * f(x)) with respect to x.
template <typename F>
TensorD numeric_grad(F f, TensorD x, const TensorD& upstream) {
  TensorD g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    g[i] = oracle::central_difference(
        [&](double v) {
          x[i] = v;
          const TensorD y = f(x);
          double s = 0.0;
          for (std::size_t k = 0; k < y.size(); ++k) s += y[k] * upstream[k];
          return s;
        },
        x0, 1e-6);
    x[i] = x0;
  }
  return g;
}

}  // namespace

TEST_CASE("tensor construction and shape checks") {
  Tensor t({2, 3, 4, 5}, 1.5f);
  CHECK(t.size() == 120);
  CHECK(t.rank() == 4);
  CHECK(t.at(1, 2, 3, 4) == 1.5f);
  CHECK(shape4(t) == Shape4{2, 3, 4, 5});
  CHECK(shape_string(t.shape()) == "[2,3,4,5]");
  CHECK(test::error_code_of([] { Tensor({2, 2}, std::vector<float>{1, 2, 3}); }) ==
        Errc::shape_mismatch);
  CHECK(test::error_code_of([] { (void)shape4(Tensor({3, 3})); }) == Errc::shape_mismatch);
  CHECK(test::error_code_of([&] { (void)t.reshaped({7}); }) == Errc::shape_mismatch);
  CHECK(t.reshaped({120}).size() == 120);
}

TEST_CASE("conv2d_reference worked examples") {
  const Tensor ones({1, 1, 3, 3}, 1.0f);
  const Tensor out = conv2d_reference(ones, ones, 1, 0);
  REQUIRE(out.shape() == Extents{1, 1, 1, 1});
  CHECK(out[0] == 9.0f);

  Rng rng(11);
  const Tensor x = random_tensor(rng, {2, 1, 4, 5});
  const Tensor id = conv2d_reference(x, Tensor({1, 1, 1, 1}, 1.0f), 1, 0);
  CHECK(id == x);
}

TEST_CASE("conv2d_reference output extents") {
  CHECK(conv_output_extent(7, 3, 2, 1) == 4);
  CHECK(conv_output_extent(5, 3, 1, 0) == 3);
  CHECK(conv_output_extent(4, 1, 2, 0) == 2);
  CHECK(test::error_code_of([] { (void)conv_output_extent(2, 5, 1, 1); }) == Errc::shape_mismatch);
}

TEST_CASE("conv2d_reference matches the naive loop oracle") {
  Rng rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t N = 1 + rng.below(2), C = 1 + rng.below(3), F = 1 + rng.below(4);
    const std::size_t K = 1 + rng.below(3), stride = 1 + rng.below(2), pad = rng.below(2);
    const std::size_t H = K + rng.below(6), W = K + rng.below(6);
    const TensorD x = random_tensor_d(rng, {N, C, H, W});
    const TensorD w = random_tensor_d(rng, {F, C, K, K});
    const TensorD fast = conv2d_reference(x, w, stride, pad);
    const TensorD slow = oracle::conv2d_naive(x, w, stride, pad);
    REQUIRE(fast.shape() == slow.shape());
    CHECK(max_abs_diff(fast, slow) <= 1e-6);
  }
  // The fixed example shape: [1,2,5,5] * [3,2,3,3], stride 1, padding 1.
  const Tensor x = random_tensor(rng, {1, 2, 5, 5});
  const Tensor w = random_tensor(rng, {3, 2, 3, 3});
  const Tensor fast = conv2d_reference(x, w, 1, 1);
  const TensorD slow = oracle::conv2d_naive(x.cast<double>(), w.cast<double>(), 1, 1);
  CHECK(fast.shape() == Extents{1, 3, 5, 5});
  CHECK(max_abs_diff(fast, slow) <= 1e-5);
}

TEST_CASE("conv2d_reference is linear in its input") {
  Rng rng(13);
  const Tensor x = random_tensor(rng, {1, 2, 6, 6});
  const Tensor y = random_tensor(rng, {1, 2, 6, 6});
  const Tensor w = random_tensor(rng, {3, 2, 3, 3});
  const float a = 0.75f, b = -1.25f;
  const Tensor lhs = conv2d_reference(add(scale(x, a), scale(y, b)), w, 1, 1);
  const Tensor rhs = add(scale(conv2d_reference(x, w, 1, 1), a), scale(conv2d_reference(y, w, 1, 1), b));
  CHECK(max_abs_diff(lhs, rhs) <= 1e-5);
}

TEST_CASE("conv2d_reference on a one-hot input reads back weight entries") {
  Rng rng(14);
  const Tensor w = random_tensor(rng, {2, 1, 3, 3});
  Tensor x({1, 1, 5, 5});
  x.at(0, 0, 2, 2) = 1.0f;
  const Tensor out = conv2d_reference(x, w, 1, 1);
  // Output (oh, ow) sees input (2,2) at kernel offset (2 - oh + 1, 2 - ow + 1).
  for (std::size_t f = 0; f < 2; ++f)
    for (std::size_t kh = 0; kh < 3; ++kh)
      for (std::size_t kw = 0; kw < 3; ++kw) {
        CHECK(out.at(0, f, 3 - kh, 3 - kw) == w.at(f, 0, kh, kw));
      }
}

TEST_CASE("conv2d shape errors") {
  const Tensor x({1, 2, 5, 5});
  CHECK(test::error_code_of([&] { (void)conv2d_reference(x, Tensor({1, 3, 3, 3}), 1, 0); }) ==
        Errc::shape_mismatch);
  CHECK(test::error_code_of([&] { (void)conv2d_reference(x, Tensor({1, 2, 7, 7}), 1, 0); }) ==
        Errc::shape_mismatch);
  CHECK(test::error_code_of([&] { (void)conv2d_reference(x, Tensor({1, 2, 3, 3}), 0, 0); }) ==
        Errc::invalid_argument);
}

TEST_CASE("conv2d backward passes match finite differences") {
  Rng rng(15);
  const TensorD x = random_tensor_d(rng, {2, 2, 5, 4});
  const TensorD w = random_tensor_d(rng, {3, 2, 3, 3});
  for (std::size_t stride : {1, 2}) {
    const TensorD up = random_tensor_d(rng, conv2d_reference(x, w, stride, 1).shape());
    const TensorD gx = conv2d_backward_input(up, w, x.shape(), stride, 1);
    const TensorD gw = conv2d_backward_weights(up, x, w.shape(), stride, 1);
    const TensorD nx = numeric_grad([&](const TensorD& v) { return conv2d_reference(v, w, stride, 1); }, x, up);
    const TensorD nw = numeric_grad([&](const TensorD& v) { return conv2d_reference(x, v, stride, 1); }, w, up);
    CHECK(max_abs_diff(gx, nx) <= 1e-6);
    CHECK(max_abs_diff(gw, nw) <= 1e-6);
  }
}

TEST_CASE("linear_reference worked examples") {
  const Tensor x({1, 2}, std::vector<float>{1, 2});
  const Tensor eye({2, 2}, std::vector<float>{1, 0, 0, 1});
  CHECK(linear_reference(x, eye).values() == std::vector<float>{1, 2});

  const Tensor ones({1, 2}, std::vector<float>{1, 1});
  const Tensor w({1, 2}, std::vector<float>{2, 3});
  const Tensor b({1}, std::vector<float>{1});
  CHECK(linear_reference(ones, w, &b)[0] == 6.0f);

  CHECK(test::error_code_of([&] { (void)linear_reference(x, Tensor({2, 3})); }) ==
        Errc::shape_mismatch);
}

TEST_CASE("linear_reference matches the triple-loop oracle and its backward is exact") {
  Rng rng(16);
  const TensorD x = random_tensor_d(rng, {4, 8});
  const TensorD w = random_tensor_d(rng, {5, 8});
  const TensorD b = random_tensor_d(rng, {5});
  CHECK(max_abs_diff(linear_reference(x, w, &b), linear_naive(x, w, &b)) <= 1e-6);
  CHECK(max_abs_diff(linear_reference(x, w), linear_naive(x, w, nullptr)) <= 1e-6);

  const TensorD up = random_tensor_d(rng, {4, 5});
  const LinearGrads<double> g = linear_backward(up, x, w, true);
  CHECK(max_abs_diff(g.input, numeric_grad([&](const TensorD& v) { return linear_reference(v, w, &b); }, x, up)) <= 1e-6);
  CHECK(max_abs_diff(g.weights, numeric_grad([&](const TensorD& v) { return linear_reference(x, v, &b); }, w, up)) <= 1e-6);
  CHECK(max_abs_diff(g.bias, numeric_grad([&](const TensorD& v) { return linear_reference(x, w, &v); }, b, up)) <= 1e-6);
}

TEST_CASE("elementwise operations") {
  const Tensor r = relu(Tensor({3}, std::vector<float>{-1, 0, 2}));
  CHECK(r.values() == std::vector<float>{0, 0, 2});
  const Tensor p = prelu(Tensor({2}, std::vector<float>{-2, 3}), 0.25f);
  CHECK(p.values() == std::vector<float>{-0.5f, 3.0f});

  Rng rng(17);
  const Tensor x = random_tensor(rng, {3, 4});
  const Tensor z = add(x, scale(x, -1.0f));
  for (float v : z.values()) CHECK(v == 0.0f);
  CHECK(test::error_code_of([&] { (void)add(x, Tensor({4, 3})); }) == Errc::shape_mismatch);
}

TEST_CASE("channel-wise prelu and its gradients") {
  Rng rng(18);
  const TensorD x = random_tensor_d(rng, {2, 3, 2, 2});
  const TensorD slopes({3}, std::vector<double>{0.1, 0.25, -0.5});
  const TensorD y = prelu(x, slopes);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 4; ++i) {
        const double v = x[(n * 3 + c) * 4 + i];
        CHECK(y[(n * 3 + c) * 4 + i] == (v >= 0 ? v : slopes[c] * v));
      }
  const TensorD up = random_tensor_d(rng, x.shape());
  const PreluGrads<double> g = prelu_backward(up, x, slopes);
  CHECK(max_abs_diff(g.input, numeric_grad([&](const TensorD& v) { return prelu(v, slopes); }, x, up)) <= 1e-6);
  CHECK(max_abs_diff(g.slopes, numeric_grad([&](const TensorD& s) { return prelu(x, s); }, slopes, up)) <= 1e-6);
}

TEST_CASE("pooling") {
  const Tensor seven({1, 1, 3, 4}, 7.0f);
  CHECK(global_average_pool(seven)[0] == 7.0f);
  const Tensor m = max_pool(Tensor({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4}), 2);
  REQUIRE(m.shape() == Extents{1, 1, 1, 1});
  CHECK(m[0] == 4.0f);
  CHECK(test::error_code_of([] { (void)max_pool(Tensor({1, 1, 2, 2}), 3); }) == Errc::shape_mismatch);

  Rng rng(19);
  const TensorD x = random_tensor_d(rng, {2, 3, 5, 4});
  const TensorD gap = global_average_pool(x);
  const TensorD mp = max_pool(x, 2);
  REQUIRE(mp.shape() == Extents{2, 3, 2, 2});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      for (std::size_t h = 0; h < 5; ++h)
        for (std::size_t w = 0; w < 4; ++w) s += x.at(n, c, h, w);
      CHECK(std::fabs(gap[n * 3 + c] - s / 20.0) <= 1e-12);
      for (std::size_t oh = 0; oh < 2; ++oh)
        for (std::size_t ow = 0; ow < 2; ++ow) {
          double best = -INFINITY;
          for (std::size_t dh = 0; dh < 2; ++dh)
            for (std::size_t dw = 0; dw < 2; ++dw) best = std::max(best, x.at(n, c, 2 * oh + dh, 2 * ow + dw));
          CHECK(mp.at(n, c, oh, ow) == best);
        }
    }
  const TensorD up_gap = random_tensor_d(rng, gap.shape());
  CHECK(max_abs_diff(global_average_pool_backward(up_gap, x.shape()),
                     numeric_grad([](const TensorD& v) { return global_average_pool(v); }, x, up_gap)) <= 1e-6);
  const TensorD up_mp = random_tensor_d(rng, mp.shape());
  CHECK(max_abs_diff(max_pool_backward(up_mp, x, 2),
                     numeric_grad([](const TensorD& v) { return max_pool(v, 2); }, x, up_mp)) <= 1e-6);
}

TEST_CASE("l2 row normalisation and its gradient") {
  Rng rng(20);
  const TensorD x = random_tensor_d(rng, {3, 6});
  const TensorD y = l2_normalize_rows(x);
  for (std::size_t n = 0; n < 3; ++n) {
    double s = 0.0;
    for (std::size_t d = 0; d < 6; ++d) s += y[n * 6 + d] * y[n * 6 + d];
    CHECK(std::fabs(std::sqrt(s) - 1.0) <= 1e-12);
  }
  const TensorD up = random_tensor_d(rng, y.shape());
  CHECK(max_abs_diff(l2_normalize_rows_backward(up, x),
                     numeric_grad([](const TensorD& v) { return l2_normalize_rows(v); }, x, up)) <= 1e-6);
}

TEST_CASE("reference counter tallies one multiply per multiply-accumulate") {
  OpCounter counter;
  (void)conv2d_reference(Tensor({1, 2, 4, 4}, 1.0f), Tensor({3, 2, 3, 3}, 1.0f), 1, 0, &counter);
  CHECK(counter.inner_multiplies == 3u * 2 * 2 * 2 * 3 * 3);
}
