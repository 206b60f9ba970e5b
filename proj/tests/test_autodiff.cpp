#include <doctest.h>

#include "diff3m/autodiff.hpp"
#include "diff3m/networks.hpp"
#include "gradient_suite.hpp"

using namespace diff3m;

namespace {

void require_ok(const gradient_suite::Case& c) {
  INFO(c.name << ": worst relative error " << c.result.worst << " at " << c.result.where);
  CHECK(c.result.checked > 0);
  CHECK(c.result.ok);
}

}  // namespace

TEST_CASE("elementwise ops pass the finite-difference check") { require_ok(gradient_suite::elementwise()); }
TEST_CASE("matrix ops") { require_ok(gradient_suite::linear_algebra()); }
TEST_CASE("conv2d with and without bias") { require_ok(gradient_suite::convolution()); }
TEST_CASE("pooling, upsampling and channel bias") { require_ok(gradient_suite::spatial()); }
TEST_CASE("activations and softmax") { require_ok(gradient_suite::activations()); }
TEST_CASE("reductions, mse, concat, slicing, reshape") { require_ok(gradient_suite::structural()); }
TEST_CASE("random two-level UNet passes the finite-difference check") { require_ok(gradient_suite::unet()); }

TEST_CASE("repeated parameter use accumulates into one gradient") {
  Tape tape;
  Var a = tape.parameter("a", Tensor({2}, {1.0, 2.0}));
  Var again = tape.parameter("a", Tensor({2}, {1.0, 2.0}));
  CHECK(a.id() == again.id());
  const Gradients g = tape.backward(ad::sum(a * again));
  CHECK(g.at("a") == Tensor({2}, {2.0, 4.0}));
}

TEST_CASE("unreached parameters get zero gradients") {
  Tape tape;
  Var a = tape.parameter("a", Tensor({2}, {1.0, 2.0}));
  tape.parameter("unused", Tensor({3}, {1.0, 1.0, 1.0}));
  const Gradients g = tape.backward(ad::sum(a));
  CHECK(g.at("unused") == Tensor::zeros({3}));
}

TEST_CASE("backward needs a scalar loss") {
  Tape tape;
  Var a = tape.parameter("a", Tensor({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(a), ShapeError);
}

TEST_CASE("ops reject mismatched shapes") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({3, 2}));
  CHECK_THROWS_AS(a + b, ShapeError);
  CHECK_THROWS_AS(ad::mse(a, b), ShapeError);
  CHECK_THROWS_AS(ad::matmul(a, a), ShapeError);
}

TEST_CASE("inference tape records no backward closures") {
  Tape tape(false);
  Var a = tape.parameter("a", Tensor({2}, {1.0, 2.0}));
  Var y = ad::sum(a * a);
  CHECK(y.value()[0] == 5.0);
  CHECK_THROWS(tape.backward(y));
}
