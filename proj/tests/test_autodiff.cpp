#include <doctest.h>

#include <cmath>

#include "smartpaste/autodiff.hpp"
#include "smartpaste/gradcheck.hpp"
#include "smartpaste/rng.hpp"

using namespace smartpaste;

namespace {

Tensor randt(Rng& rng, std::vector<int> shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.gaussian() * 0.5;
  return t;
}

}  // namespace

TEST_CASE("conv2d with a centered delta kernel is the identity") {
  Rng rng(1, 0);
  Tensor x = randt(rng, {6, 6, 1});
  Tensor k = Tensor::zeros({3, 3, 1, 1});
  k.at4(1, 1, 0, 0) = 1.0;
  NodePtr y = conv2d(constant(x), constant(k), 1, 1);
  CHECK(y->value.data == x.data);
}

TEST_CASE("conv2d on a constant image sums the kernel in the interior") {
  Rng rng(2, 0);
  Tensor k = randt(rng, {3, 3, 1, 1});
  double ksum = k.sum();
  Tensor x = Tensor::full({8, 8, 1}, 0.7);
  NodePtr y = conv2d(constant(x), constant(k), 1, 1);
  for (int yy = 1; yy < 7; ++yy)
    for (int xx = 1; xx < 7; ++xx)
      CHECK(y->value.at(yy, xx, 0) == doctest::Approx(0.7 * ksum));
}

TEST_CASE("stride-2 conv halves and transposed conv doubles spatial dims") {
  Rng rng(3, 0);
  Tensor x = randt(rng, {8, 8, 2});
  Tensor k = randt(rng, {3, 3, 2, 4});
  NodePtr y = conv2d(constant(x), constant(k), 2, 1);
  CHECK(y->value.h() == 4);
  CHECK(y->value.w() == 4);
  CHECK(y->value.c() == 4);

  Tensor kt = randt(rng, {4, 4, 3, 2});
  NodePtr up = transposed_conv2d(constant(x), constant(kt));
  CHECK(up->value.h() == 16);
  CHECK(up->value.w() == 16);
  CHECK(up->value.c() == 3);
}

TEST_CASE("conv and transposed conv satisfy the adjoint identity") {
  // <conv(x), y> == <x, conv_adjoint(y)> with a shared kernel
  Rng rng(4, 0);
  Tensor k = randt(rng, {4, 4, 3, 2});  // maps 3ch -> 2ch at stride 2
  Tensor x = randt(rng, {8, 8, 3});
  Tensor y = randt(rng, {4, 4, 2});
  ConvSpec s = ConvSpec::same(8, 8, 3, 2, 2, 1, 4, 4);
  NodePtr cx = conv_y_op(constant(x), constant(k), s);
  NodePtr cy = conv_x_op(constant(y), constant(k), s);
  double lhs = 0, rhs = 0;
  for (int64_t i = 0; i < cx->value.size(); ++i)
    lhs += cx->value.data[i] * y.data[i];
  for (int64_t i = 0; i < cy->value.size(); ++i)
    rhs += cy->value.data[i] * x.data[i];
  CHECK(std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)) <= 1e-5);
}

TEST_CASE("leaky relu values") {
  Tensor x({1, 1, 2});
  x.data = {1.0, -1.0};
  NodePtr y = leaky_relu(constant(x), 0.2);
  CHECK(y->value.data[0] == 1.0);
  CHECK(y->value.data[1] == doctest::Approx(-0.2));
}

TEST_CASE("lrn values from the defining formula") {
  Tensor x = Tensor::full({2, 2, 4}, 2.0);
  NodePtr y = lrn(constant(x));
  for (double v : y->value.data)
    CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
  Tensor z = Tensor::zeros({2, 2, 4});
  NodePtr yz = lrn(constant(z));
  for (double v : yz->value.data) CHECK(v == 0.0);
}

TEST_CASE("noise_add values and identity at zero scale") {
  Rng rng(5, 0);
  Tensor x = randt(rng, {4, 4, 3});
  Tensor noise = Tensor::full({4, 4, 1}, 1.0);
  Tensor zero_scale = Tensor::zeros({1, 1, 3});
  NodePtr same =
      noise_add(constant(x), constant(noise), constant(zero_scale));
  CHECK(same->value.data == x.data);
  Tensor one_scale = Tensor::full({1, 1, 3}, 1.0);
  NodePtr plus = noise_add(constant(x), constant(noise), constant(one_scale));
  for (int64_t i = 0; i < x.size(); ++i)
    CHECK(plus->value.data[i] == doctest::Approx(x.data[i] + 1.0));
}

TEST_CASE("concat adds channel counts; dense identity") {
  Rng rng(6, 0);
  Tensor a = randt(rng, {4, 4, 2});
  Tensor b = randt(rng, {4, 4, 3});
  NodePtr cc = concat({constant(a), constant(b)});
  CHECK(cc->value.c() == 5);

  Tensor x = randt(rng, {2, 2, 1});
  Tensor w = Tensor::zeros({4, 4});
  for (int i = 0; i < 4; ++i) w.data[size_t(i) * 4 + i] = 1.0;
  NodePtr d = dense(constant(x), constant(w),
                    constant(Tensor::zeros({4, 1, 1})));
  for (int i = 0; i < 4; ++i) CHECK(d->value.data[i] == x.data[i]);
}

TEST_CASE("backward of sum is ones; backward of mean-square is x/N") {
  Rng rng(7, 0);
  Tensor x = randt(rng, {3, 3, 2});
  NodePtr xl = leaf(x);
  GradMap g1 = backward(sum_all(xl));
  for (double v : g1.at(xl.get())->value.data) CHECK(v == 1.0);

  NodePtr xl2 = leaf(x);
  NodePtr loss = scalar_mul(mean_all(square(xl2)), 0.5);
  GradMap g2 = backward(loss);
  const Tensor& grad = g2.at(xl2.get())->value;
  for (int64_t i = 0; i < x.size(); ++i)
    CHECK(grad.data[i] == doctest::Approx(x.data[i] / double(x.size())));
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(8, 0);
  Tensor x = randt(rng, {4, 4, 1});
  auto grad_of = [&](auto make_loss) {
    NodePtr xl = leaf(x);
    GradMap g = backward(make_loss(xl));
    return g.at(xl.get())->value;
  };
  Tensor gf = grad_of([](const NodePtr& v) { return sum_all(square(v)); });
  Tensor gg = grad_of([](const NodePtr& v) { return sum_all(abs_node(v)); });
  Tensor gc = grad_of([](const NodePtr& v) {
    return add(scalar_mul(sum_all(square(v)), 2.0),
               scalar_mul(sum_all(abs_node(v)), -3.0));
  });
  for (int64_t i = 0; i < x.size(); ++i)
    CHECK(gc.data[i] ==
          doctest::Approx(2.0 * gf.data[i] - 3.0 * gg.data[i]));
}

TEST_CASE("two backward passes over one graph agree") {
  Rng rng(9, 0);
  Tensor x = randt(rng, {4, 4, 2});
  Tensor k = randt(rng, {3, 3, 2, 2});
  NodePtr xl = leaf(x);
  NodePtr loss = sum_all(square(leaky_relu(conv2d(xl, constant(k)))));
  GradMap a = backward(loss);
  GradMap b = backward(loss);
  CHECK(a.at(xl.get())->value.data == b.at(xl.get())->value.data);
}

TEST_CASE("input_gradient_graph of a linear map is the weight") {
  Rng rng(10, 0);
  Tensor w = randt(rng, {1, 8});
  Tensor x = randt(rng, {8, 1, 1});
  NodePtr xl = leaf(x);
  NodePtr d = dense(xl, constant(w), constant(Tensor::zeros({1, 1, 1})));
  NodePtr grad = input_gradient_graph(d, xl);
  for (int i = 0; i < 8; ++i)
    CHECK(grad->value.data[i] == doctest::Approx(w.data[i]));
}

TEST_CASE("input gradient of half squared norm is x; second order checks") {
  Rng rng(11, 0);
  Tensor x = randt(rng, {4, 1, 1});
  NodePtr xl = leaf(x);
  NodePtr d = scalar_mul(sum_all(square(xl)), 0.5);
  NodePtr grad = input_gradient_graph(d, xl);
  for (int i = 0; i < 4; ++i)
    CHECK(grad->value.data[i] == doctest::Approx(x.data[i]));

  // d/dx ||grad||^2 = 2x, via double backprop
  NodePtr norm2 = sum_all(square(grad));
  GradMap g2 = backward(norm2);
  const Tensor& second = g2.at(xl.get())->value;
  for (int i = 0; i < 4; ++i)
    CHECK(second.data[i] == doctest::Approx(2.0 * x.data[i]).epsilon(1e-9));
}

TEST_CASE("finite-difference suite passes and detects sabotage") {
  auto results = run_gradcheck();
  for (const auto& r : results) {
    INFO(r.op << " max_rel_error=" << r.max_rel_error);
    CHECK(r.passed);
  }
  // a deliberately corrupted analytic gradient must be flagged
  auto broken = run_gradcheck(1e-4, 1e-3, /*sabotage=*/0.05);
  bool any_failed = false;
  for (const auto& r : broken) any_failed = any_failed || !r.passed;
  CHECK(any_failed);
}
