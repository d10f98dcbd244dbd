#include <doctest.h>

#include <cmath>
#include <limits>

#include "fscn/gradcheck.hpp"
#include "fscn/ops.hpp"
#include "fscn/tensor.hpp"

using namespace fscn;

TEST_CASE("shape and storage") {
  Tensor<float> t(Shape{2, 3, 4, 5});
  CHECK(t.numel() == 120);
  CHECK(t.shape().plane() == 20);
  CHECK(t.shape().str() == "(2,3,4,5)");
  for (float v : t.data()) CHECK(v == 0.0f);

  t.at(1, 2, 3, 4) = 7.0f;
  CHECK(t.data()[119] == 7.0f);

  Tensor<float> alias = t;
  CHECK(alias.same_storage(t));
  Tensor<float> copy = t.clone();
  CHECK_FALSE(copy.same_storage(t));
  copy.at(0, 0, 0, 0) = 1.0f;
  CHECK(t.at(0, 0, 0, 0) == 0.0f);

  CHECK_THROWS_AS(Tensor<float>(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  CHECK(Tensor<double>::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(t.item(), ShapeError);
}

TEST_CASE("grad buffer is lazy and zeroed") {
  Tensor<double> t(Shape{1, 1, 1, 3}, true);
  CHECK_FALSE(t.has_grad());
  auto g = t.grad();
  CHECK(t.has_grad());
  for (double v : g) CHECK(v == 0.0);
  g[1] = 4.0;
  t.zero_grad();
  CHECK(t.grad()[1] == 0.0);
  t.drop_grad();
  CHECK_FALSE(t.has_grad());
}

TEST_CASE("backward of sum gives ones") {
  Tensor<double> x(Shape{2, 2, 3, 1}, std::vector<double>(12, 1.5), true);
  Graph<double> g;
  Tensor<double> loss = sum(g, x);
  backward(loss, g);
  for (double v : x.grad()) CHECK(v == 1.0);
}

TEST_CASE("backward of sum(a * x) gives grad(a) = sum(x)") {
  Tensor<double> a = Tensor<double>::scalar(0.7, true);
  Tensor<double> x(Shape{1, 1, 1, 2}, {2.0, 3.0});
  Graph<double> g;
  Tensor<double> loss = sum(g, scalar_mul(g, x, a));
  g.backward(loss);
  CHECK(a.grad()[0] == doctest::Approx(5.0));
}

TEST_CASE("backward through relu") {
  Tensor<double> x(Shape{1, 1, 1, 2}, {-1.0, 2.0}, true);
  Graph<double> g;
  Tensor<double> loss = sum(g, relu(g, x));
  g.backward(loss);
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("fan-out accumulates") {
  Tensor<double> x(Shape{1, 1, 1, 2}, {1.0, -2.0}, true);
  Graph<double> g;
  Tensor<double> y = add(g, x, x);
  Tensor<double> loss = sum(g, mul(g, y, x));  // 2 * x^2
  g.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(-8.0));
}

TEST_CASE("graph misuse is rejected") {
  Tensor<double> x(Shape{1, 1, 1, 2}, {1.0, 2.0}, true);
  Graph<double> g;
  Tensor<double> y = relu(g, x);
  CHECK_THROWS_AS(g.backward(y), ShapeError);

  Tensor<double> loss = sum(g, x);
  g.backward(loss);
  CHECK_THROWS_AS(g.backward(loss), std::logic_error);
  CHECK_FALSE(g.recording());
}

TEST_CASE("tape order and no-grad mode") {
  Tensor<double> x(Shape{1, 1, 2, 2}, {1, 2, 3, 4}, true);
  Graph<double> g;
  sum(g, sigmoid(g, relu(g, x)));
  const auto ops = g.op_names();
  REQUIRE(ops.size() == 3);
  CHECK(ops[0] == "relu");
  CHECK(ops[1] == "sigmoid");
  CHECK(ops[2] == "sum");

  Graph<double> off(GradMode::kDisabled);
  Tensor<double> y = sum(off, relu(off, x));
  CHECK(off.size() == 0);
  CHECK_FALSE(y.requires_grad());

  Tensor<double> constant(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  Graph<double> g2;
  relu(g2, constant);
  CHECK(g2.size() == 0);
}

TEST_CASE("all_finite") {
  std::vector<float> v{1.0f, 2.0f};
  CHECK(all_finite<float>(v));
  v.push_back(std::numeric_limits<float>::quiet_NaN());
  CHECK_FALSE(all_finite<float>(v));
  v.back() = std::numeric_limits<float>::infinity();
  CHECK_FALSE(all_finite<float>(v));
}

TEST_CASE("grad_check of x^2 at 3") {
  Tensor<double> x(Shape{1, 1, 1, 1}, std::vector<double>{3.0});
  const auto report = grad_check("square", [x](Graph<double>& g) { return sum(g, mul(g, x, x)); },
                                 {{"x", x}});
  CHECK(report.passed);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(report.max_rel_error < 1e-6);
  REQUIRE(report.per_parameter_errors.size() == 1);
  CHECK(report.per_parameter_errors[0].first == "x");
}

TEST_CASE("grad_check of a constant objective") {
  Tensor<double> x(Shape{1, 1, 1, 2}, {1.0, 2.0});
  Tensor<double> c(Shape{1, 1, 1, 2}, {4.0, 5.0});
  const auto report = grad_check("constant", [c](Graph<double>& g) { return sum(g, c); }, {{"x", x}});
  CHECK(report.passed);
  CHECK(report.max_rel_error == 0.0);
}

TEST_CASE("grad_check flags a wrong gradient and NaN") {
  // sum(relu(x)) straddling the kink: numeric derivative 0.5, analytic 0.
  Tensor<double> x(Shape{1, 1, 1, 1}, std::vector<double>{0.0});
  const auto kink = grad_check("kink", [x](Graph<double>& g) { return sum(g, relu(g, x)); }, {{"x", x}});
  CHECK_FALSE(kink.passed);
  CHECK(kink.max_rel_error == doctest::Approx(1.0));

  Tensor<double> y(Shape{1, 1, 1, 1}, std::vector<double>{std::numeric_limits<double>::quiet_NaN()});
  const auto nan = grad_check("nan", [y](Graph<double>& g) { return sum(g, mul(g, y, y)); }, {{"y", y}});
  CHECK_FALSE(nan.passed);
}

TEST_CASE("grad_check sampling is bounded by max_entries") {
  Tensor<double> x(Shape{1, 2, 4, 4});
  for (std::size_t i = 0; i < x.numel(); ++i) x.data()[i] = 0.1 * static_cast<double>(i) - 1.3;
  GradCheckOptions options;
  options.max_entries = 5;
  const auto report = grad_check("sampled", [x](Graph<double>& g) { return sum(g, mul(g, x, x)); },
                                 {{"x", x}}, options);
  CHECK(report.passed);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.data()[i] == 0.1 * static_cast<double>(i) - 1.3);
}
