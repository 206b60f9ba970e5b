#include <doctest.h>

#include "diff3m/tensor.hpp"
#include "oracle.hpp"

using namespace diff3m;

TEST_CASE("shape bookkeeping") {
  Tensor t({2, 3, 4});
  CHECK(t.rank() == 3);
  CHECK(t.size() == 24);
  CHECK(t.dim(1) == 3);
  CHECK((t.array() == 0.0).all());
  CHECK(to_string(t.shape()) == "[2x3x4]");
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(t.reshaped({5, 5}), ShapeError);
  CHECK(t.reshaped({6, 4}).shape() == Shape{6, 4});
}

TEST_CASE("rank-2 matrix view is row major") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.matrix()(0, 2) == 3.0);
  CHECK(t.matrix()(1, 0) == 4.0);
  CHECK(t.at(1, 2) == 6.0);
}

TEST_CASE("matmul matches explicit sums") {
  std::mt19937_64 rng(1);
  const Tensor a = oracle::random_tensor({3, 5}, rng);
  const Tensor b = oracle::random_tensor({5, 4}, rng);
  const Tensor c = kernels::matmul(a, b);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 4; ++j) {
      double acc = 0;
      for (Index k = 0; k < 5; ++k) acc += a.at(i, k) * b.at(k, j);
      CHECK(c.at(i, j) == doctest::Approx(acc).epsilon(1e-14));
    }
  CHECK_THROWS_AS(kernels::matmul(a, a), ShapeError);
}

TEST_CASE("conv2d agrees with the direct-loop oracle") {
  std::mt19937_64 rng(2);
  for (Index k : {1, 3, 5}) {
    const Tensor x = oracle::random_tensor({2, 3, 6, 5}, rng);
    const Tensor w = oracle::random_tensor({4, 3, k, k}, rng);
    const Tensor b = oracle::random_tensor({4}, rng);
    const Tensor got = kernels::conv2d(x, w, &b);
    const Tensor want = oracle::conv2d(x, w, &b);
    CHECK(((got.array() - want.array()).abs() < 1e-12).all());
  }
}

TEST_CASE("conv2d rejects incompatible kernels") {
  const Tensor x({1, 2, 4, 4});
  CHECK_THROWS_AS(kernels::conv2d(x, Tensor({3, 1, 3, 3}), nullptr), ShapeError);
  CHECK_THROWS_AS(kernels::conv2d(x, Tensor({3, 2, 2, 2}), nullptr), ShapeError);
  const Tensor bias({2});
  CHECK_THROWS_AS(kernels::conv2d(x, Tensor({3, 2, 3, 3}), &bias), ShapeError);
}

TEST_CASE("pooling and upsampling") {
  Tensor x({1, 1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  const Tensor p = kernels::avg_pool2(x);
  CHECK(p.shape() == Shape{1, 1, 1, 2});
  CHECK(p[0] == 3.5);
  CHECK(p[1] == 5.5);
  const Tensor u = kernels::upsample2(p);
  CHECK(u.shape() == Shape{1, 1, 2, 4});
  CHECK(u.at(0, 0, 1, 1) == 3.5);
  CHECK(u.at(0, 0, 0, 2) == 5.5);
  CHECK_THROWS_AS(kernels::avg_pool2(Tensor({1, 1, 3, 4})), ShapeError);
}

TEST_CASE("softmax along an inner axis") {
  std::mt19937_64 rng(3);
  const Tensor x = oracle::random_tensor({2, 4, 3}, rng, -5, 5);
  const Tensor s = kernels::softmax(x, 1);
  for (Index a = 0; a < 2; ++a)
    for (Index c = 0; c < 3; ++c) {
      std::vector<double> logits;
      for (Index j = 0; j < 4; ++j) logits.push_back(x[(a * 4 + j) * 3 + c]);
      const auto want = oracle::softmax(logits);
      for (Index j = 0; j < 4; ++j) CHECK(s[(a * 4 + j) * 3 + c] == doctest::Approx(want[j]).epsilon(1e-14));
    }
  CHECK_THROWS_AS(kernels::softmax(x, 3), ShapeError);
}

TEST_CASE("softmax survives huge logits") {
  const Tensor s = kernels::softmax(Tensor({1, 3}, {1000.0, 1001.0, -1000.0}), 1);
  CHECK(all_finite(s));
  CHECK(s[0] + s[1] + s[2] == doctest::Approx(1.0));
}

TEST_CASE("concat along axis 0 and 1") {
  const Tensor a({1, 2}, {1, 2});
  const Tensor b({2, 2}, {3, 4, 5, 6});
  const Tensor r = kernels::concat({&a, &b}, 0);
  CHECK(r == Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
  const Tensor c({1, 1}, {9});
  CHECK(kernels::concat({&a, &c}, 1) == Tensor({1, 3}, {1, 2, 9}));
  CHECK_THROWS_AS(kernels::concat({&a, &c}, 0), ShapeError);
}

TEST_CASE("float cast round trip is exact for float-representable values") {
  const Tensor t({3}, {0.5, -0.25, 3.0});
  CHECK(t.cast<float>().cast<double>() == t);
}
