#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "cee/errors.hpp"
#include "cee/numeric.hpp"

using namespace cee;

namespace {

Parameter filled(std::size_t rows, std::size_t cols, std::initializer_list<double> v) {
  Parameter p("p", rows, cols);
  p.value.assign(v.begin(), v.end());
  return p;
}

}  // namespace

TEST_SUITE("numeric") {

TEST_CASE("affine: identity, zero weights, naive oracle, mismatch") {
  Parameter I = filled(2, 2, {1, 0, 0, 1});
  Parameter z = filled(2, 1, {0, 0});
  const Vec x{1, 2};
  CHECK(affine(I, z, x) == Vec{1, 2});

  Parameter W0 = filled(2, 2, {0, 0, 0, 0});
  Parameter b = filled(2, 1, {3, 4});
  CHECK(affine(W0, b, Vec{-7.5, 11}) == Vec{3, 4});

  Rng rng(5);
  Parameter W("W", 3, 2), bb("b", 3, 1);
  for (double& v : W.value) v = rng.normal();
  for (double& v : bb.value) v = rng.normal();
  const Vec xr{rng.normal(), rng.normal()};
  const Vec got = affine(W, bb, xr);
  for (std::size_t r = 0; r < 3; ++r) {
    double acc = bb.value[r];
    for (std::size_t c = 0; c < 2; ++c) acc += W.value[r * 2 + c] * xr[c];
    CHECK(got[r] == doctest::Approx(acc).epsilon(1e-15));
  }

  CHECK_THROWS_AS(affine(W, bb, Vec{1, 2, 3}), ConfigError);
  CHECK_THROWS_AS(affine(W, z, xr), ConfigError);
}

TEST_CASE("relu sign cases and idempotence") {
  CHECK(relu(Vec{-1, 0, 2}) == Vec{0, 0, 2});
  CHECK(relu(Vec{}).empty());
  Rng rng(2);
  for (int s = 0; s < 100; ++s) {
    Vec x(5);
    for (double& v : x) v = rng.normal();
    const Vec once = relu(x);
    CHECK(relu(once) == once);
  }
}

TEST_CASE("softmax examples") {
  const Vec p = softmax(Vec{0, 0});
  CHECK(p[0] == 0.5);
  CHECK(p[1] == 0.5);

  const Vec q = softmax(Vec{std::log(2.0), 0});
  CHECK(q[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(q[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // Large logits: compare against the long-double closed form.
  const Vec big = softmax(Vec{1000, 0});
  CHECK(std::isfinite(big[0]));
  CHECK(std::isfinite(big[1]));
  const long double tail = std::exp(-1000.0L);
  CHECK(big[0] == doctest::Approx(static_cast<double>(1.0L / (1.0L + tail))));
  CHECK(big[1] == doctest::Approx(static_cast<double>(tail / (1.0L + tail))).epsilon(1e-12));

  CHECK_THROWS_AS(softmax(Vec{std::numeric_limits<double>::quiet_NaN(), 0}), NumericError);
}

TEST_CASE("softmax properties over random logits") {
  Rng rng(17);
  for (int s = 0; s < 200; ++s) {
    Vec z(2 + rng.uniform_int(6));
    for (double& v : z) v = 5.0 * rng.normal();
    const Vec p = softmax(z);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    const double c = 100.0 * rng.normal();
    Vec shifted = z;
    for (double& v : shifted) v += c;
    const Vec ps = softmax(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(ps[i] == doctest::Approx(p[i]).epsilon(1e-9));
  }
}

TEST_CASE("cross-entropy examples and floor") {
  CHECK(cross_entropy(0, Vec{0.5, 0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(cross_entropy(1, Vec{0.25, 0.75}) == doctest::Approx(0.2876820724517809).epsilon(1e-12));
  CHECK(cross_entropy(Vec{0, 1}, Vec{0.25, 0.75}) == doctest::Approx(0.2876820724517809).epsilon(1e-12));
  CHECK(cross_entropy(0, Vec{1.0, 0.0}) == 0.0);
  const double floored = cross_entropy(1, Vec{1.0, 0.0});
  CHECK(std::isfinite(floored));
  CHECK(floored == doctest::Approx(-std::log(kProbFloor)));
  CHECK(cross_entropy(1, Vec{1.0, 0.0}) >= 0.0);
}

TEST_CASE("entropy and argmax") {
  CHECK(entropy(Vec{0.5, 0.5}) == doctest::Approx(std::log(2.0)));
  CHECK(entropy(Vec{1.0, 0.0}) == 0.0);
  CHECK(argmax(Vec{0.2, 0.5, 0.5}) == 1);
  CHECK(argmax(Vec{3, 1, 2}) == 0);
}

TEST_CASE("sgd step") {
  Parameter w = filled(1, 1, {1.0});
  w.grad = {2.0};
  Parameter* ps[] = {&w};
  sgd_step(ps, 0.1);
  CHECK(w.value[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(w.grad[0] == 0.0);

  sgd_step(ps, 0.1);  // zero grad: unchanged
  CHECK(w.value[0] == doctest::Approx(0.8).epsilon(1e-15));

  CHECK_THROWS_AS(sgd_step(ps, 0.0), ConfigError);
  CHECK_THROWS_AS(sgd_step(ps, -1.0), ConfigError);
}

TEST_CASE("sgd on a quadratic follows the closed form") {
  // f(w) = 0.5 * ||w - c||^2, grad = w - c, so w_k - c = (1 - lr)^k (w_0 - c).
  Parameter w = filled(3, 1, {4.0, -2.0, 0.5});
  const Vec c{1.0, 1.0, -1.0};
  const Vec w0 = w.value;
  const double lr = 0.1;
  Parameter* ps[] = {&w};
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 50; ++k) {
    double f = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      w.grad[i] = w.value[i] - c[i];
      f += 0.5 * w.grad[i] * w.grad[i];
    }
    CHECK(f < prev);
    prev = f;
    sgd_step(ps, lr);
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(w.value[i] - c[i] == doctest::Approx(std::pow(1 - lr, k) * (w0[i] - c[i])).epsilon(1e-12));
  }
}

TEST_CASE("rng determinism and substreams") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng root(42);
  Rng s1 = root.split("init"), s2 = root.split("sampling"), s3 = root.split("init");
  CHECK(root.counter() == 0);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 100; ++i) {
    const auto x = s1.next_u64();
    CHECK(x == s3.next_u64());
    seen.insert(x);
    seen.insert(s2.next_u64());
  }
  CHECK(seen.size() == 200);
  CHECK(Rng(1).split(std::uint64_t{0}).next_u64() != Rng(1).split(std::uint64_t{1}).next_u64());
}

TEST_CASE("rng distributions") {
  Rng rng(9);
  const int n = 200000;
  double sum = 0, sq = 0, usum = 0;
  std::uint64_t counts[7] = {};
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
    const double u = rng.uniform();
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    usum += u;
    ++counts[rng.uniform_int(7)];
  }
  // 5-sigma bands
  CHECK(std::abs(sum / n) < 5.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(usum / n - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / n));
  for (auto c : counts) CHECK(std::abs(static_cast<double>(c) - n / 7.0) < 5.0 * std::sqrt(n / 7.0));
}

TEST_CASE("parameter init is deterministic and bounded") {
  Parameter p("w", 4, 6), q("w", 4, 6);
  Rng a(3), b(3);
  init_scaled_uniform(p, a);
  init_scaled_uniform(q, b);
  CHECK(p.value == q.value);
  const double bound = std::sqrt(6.0 / 10.0);
  for (double v : p.value) CHECK(std::abs(v) <= bound);
}

TEST_CASE("fnv1a64 known values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("b") == 0xaf63df4c8601f1a5ULL);
}

}  // TEST_SUITE
