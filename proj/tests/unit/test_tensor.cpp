#include <cmath>

#include <doctest.h>

#include "dcg/tensor.hpp"
#include "test_util.hpp"

using namespace dcg;
using testutil::fd;
using testutil::rand_tensor;

TEST_CASE("matmul identity and hand product") {
  Tensor I3 = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Rng rng(3);
  Tensor X = rand_tensor({3, 5}, rng);
  Tensor Y = matmul(I3, X);
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 5; ++j) CHECK(Y.at(i, j) == X.at(i, j));

  Tensor A = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor B = Tensor::from_data({2, 1}, {1, 1});
  Tensor C = matmul(A, B);
  CHECK(C.at(0, 0) == 3.0);
  CHECK(C.at(1, 0) == 7.0);
}

TEST_CASE("matmul gradient equals ones times B transpose") {
  Rng rng(7);
  Tensor A = rand_tensor({3, 4}, rng);
  Tensor B = rand_tensor({4, 2}, rng, -2.0, 2.0, false);
  sum(matmul(A, B)).backward();
  REQUIRE(A.has_grad());
  // d sum(AB) / dA[i,k] = sum_j B[k,j]
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t k = 0; k < 4; ++k) {
      double expect = B.at(k, 0) + B.at(k, 1);
      CHECK(A.grad()[static_cast<size_t>(i * 4 + k)] == doctest::Approx(expect).epsilon(1e-12));
    }
  // and against central differences
  Tensor A2 = A.detach();
  auto& d = A2.mutable_data();
  (void)d;
  for (size_t c : {size_t(0), size_t(5), size_t(11)}) {
    double numeric = fd(A2, c, [&] { return sum(matmul(A2, B)).value(); });
    CHECK(std::abs(numeric - A.grad()[c]) < 1e-6);
  }
}

TEST_CASE("matmul shape error names both shapes") {
  Tensor A = Tensor::zeros({2, 3});
  Tensor B = Tensor::zeros({4, 2});
  try {
    matmul(A, B);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
}

TEST_CASE("softmax examples") {
  Tensor a = softmax(Tensor::from_data({2}, {0.0, 0.0}), 0);
  CHECK(a.at(0) == 0.5);
  CHECK(a.at(1) == 0.5);

  Tensor b = softmax(Tensor::from_data({2}, {std::log(1.0), std::log(3.0)}), 0);
  CHECK(b.at(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(b.at(1) == doctest::Approx(0.75).epsilon(1e-12));

  // shift invariance
  Rng rng(11);
  Tensor x = rand_tensor({7}, rng, -3.0, 3.0, false);
  Tensor shifted = add(x, Tensor::scalar(1.234567));
  Tensor s1 = softmax(x, 0), s2 = softmax(shifted, 0);
  for (int64_t i = 0; i < 7; ++i) CHECK(s1.at(i) == doctest::Approx(s2.at(i)).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and stay positive") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = rand_tensor({4, 6}, rng, -30.0, 30.0, false);
    Tensor s = softmax(x, 1);
    for (int64_t i = 0; i < 4; ++i) {
      double total = 0.0;
      for (int64_t j = 0; j < 6; ++j) {
        CHECK(s.at(i, j) > 0.0);
        total += s.at(i, j);
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(softmax(Tensor::from_data({2}, {1.0, std::nan("")}), 0), NumericError);
}

TEST_CASE("sigmoid examples") {
  CHECK(sigmoid(Tensor::scalar(0.0)).value() == 0.5);
  double v = sigmoid(Tensor::scalar(-1000.0)).value();
  CHECK(std::isfinite(v));
  CHECK(v >= 0.0);
  CHECK(v < 1e-300);
  Rng rng(17);
  for (int i = 0; i < 20; ++i) {
    double x = rng.uniform(-20, 20);
    double s = sigmoid(Tensor::scalar(x)).value() + sigmoid(Tensor::scalar(-x)).value();
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("softplus examples") {
  CHECK(softplus(Tensor::scalar(0.0)).value() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(std::abs(softplus(Tensor::scalar(50.0)).value() - 50.0) < 1e-9);
  // strictly positive, monotone
  double prev = 0.0;
  for (int i = 0; i < 40; ++i) {
    double x = -20.0 + i;
    double y = softplus(Tensor::scalar(x)).value();
    CHECK(y > 0.0);
    if (i) CHECK(y > prev);
    prev = y;
  }
  // derivative equals sigmoid, by finite differences
  Rng rng(19);
  Tensor x = rand_tensor({5}, rng);
  sum(softplus(x)).backward();
  for (size_t c = 0; c < 5; ++c) {
    double numeric = fd(x, c, [&] {
      NoGradGuard ng;
      return sum(softplus(x)).value();
    });
    CHECK(std::abs(numeric - x.grad()[c]) < 1e-6);
    CHECK(std::abs(x.grad()[c] - sigmoid(Tensor::scalar(x.at(static_cast<int64_t>(c)))).value()) <
          1e-12);
  }
}

TEST_CASE("backward basics") {
  Rng rng(23);
  Tensor x = rand_tensor({4}, rng);
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor y = rand_tensor({4}, rng);
  sum(mul(y, y)).backward();
  for (int64_t i = 0; i < 4; ++i)
    CHECK(y.grad()[static_cast<size_t>(i)] == doctest::Approx(2.0 * y.at(i)).epsilon(1e-14));
}

TEST_CASE("backward sums both paths when a tensor is used twice") {
  Tensor x = Tensor::from_data({2}, {3.0, -1.0}, true);
  // f = sum(x*x) + sum(x)  ->  grad = 2x + 1
  Tensor f = add(sum(mul(x, x)), sum(x));
  f.backward();
  CHECK(x.grad()[0] == doctest::Approx(7.0));
  CHECK(x.grad()[1] == doctest::Approx(-1.0));
}

TEST_CASE("repeated backward accumulates additively") {
  Tensor x = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  Tensor loss = sum(x);
  loss.backward();
  loss.backward();
  for (double g : x.grad()) CHECK(g == 2.0);
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("backward contract errors") {
  Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  CHECK_THROWS_AS(mul(x, x).backward(), NumericError);  // non-scalar root
  Tensor c = Tensor::scalar(1.0, false);
  CHECK_THROWS_AS(c.backward(), Error);  // no grad required
}

TEST_CASE("every reachable requires-grad tensor gets a grad buffer") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor dead_end = mul(x, Tensor::from_data({2}, {0.0, 0.0}, false));
  Tensor loss = sum(dead_end);
  loss.backward();
  CHECK(x.has_grad());  // zero gradient, but populated
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("broadcast rules are narrow") {
  Tensor m = Tensor::zeros({3, 4});
  Tensor row = Tensor::zeros({4});
  Tensor col = Tensor::zeros({3});
  CHECK_NOTHROW(add(m, row));
  CHECK_NOTHROW(add(m, Tensor::scalar(1.0)));
  CHECK_THROWS_AS(add(m, col), ShapeError);  // no column broadcast
}

TEST_CASE("log rejects non-positive input") {
  CHECK_THROWS_AS(log(Tensor::scalar(0.0)), NumericError);
  CHECK_THROWS_AS(log(Tensor::scalar(-1.0)), NumericError);
}

TEST_CASE("l2 normalize and zero-vector error") {
  Tensor v = Tensor::from_data({2, 2}, {3.0, 4.0, 0.0, 2.0});
  Tensor n = l2_normalize_rows(v);
  CHECK(n.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n.at(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK_THROWS_AS(l2_normalize_rows(Tensor::zeros({1, 3})), NumericError);
}

TEST_CASE("row normalize conventions") {
  Tensor m = Tensor::from_data({2, 3}, {2.0, 2.0, 0.0, 0.0, 0.0, 0.0});
  Tensor n = row_normalize_nonneg(m);
  CHECK(n.at(0, 0) == 0.5);
  CHECK(n.at(0, 1) == 0.5);
  CHECK(n.at(0, 2) == 0.0);
  for (int64_t j = 0; j < 3; ++j) CHECK(n.at(1, j) == 0.0);  // zero row stays zero, no NaN
  CHECK_THROWS_AS(row_normalize_nonneg(Tensor::from_data({1, 2}, {1.0, -0.5})), NumericError);
}

TEST_CASE("determinism: identical graphs give bit-identical values and grads") {
  auto build = [] {
    Rng rng(404);
    Tensor a = rand_tensor({4, 4}, rng);
    Tensor b = rand_tensor({4, 4}, rng);
    Tensor loss = mean_all(mul(softmax(matmul(a, b), 1), sigmoid(a)));
    loss.backward();
    return std::pair<std::vector<double>, std::vector<double>>(a.grad(), b.grad());
  };
  auto r1 = build();
  auto r2 = build();
  CHECK(r1.first == r2.first);
  CHECK(r1.second == r2.second);
}
