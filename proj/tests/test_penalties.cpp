#include <doctest.h>

#include "oracles.hpp"
#include "ssnls/penalties.hpp"

using namespace ssnls;

TEST_CASE("huber branches") {
  auto z = huber(Vec::Zero(3), 0.7);
  CHECK(z.value == 0.0);
  CHECK(z.grad.isZero());

  Vec x(2);
  x << 3, 4;
  auto o = huber(x, 1.0);
  CHECK(o.value == doctest::Approx(4.5));
  CHECK(o.grad[0] == doctest::Approx(0.6));
  CHECK(o.grad[1] == doctest::Approx(0.8));

  x << 0.3, 0.4;
  auto i = huber(x, 1.0);
  CHECK(i.value == doctest::Approx(0.125));
  CHECK(i.grad[0] == doctest::Approx(0.3));
  CHECK(i.grad[1] == doctest::Approx(0.4));
}

TEST_CASE("huber is continuous and C1 across the seam") {
  Vec u(3);
  u << 1, 2, 2;
  u /= 3.0;
  const double eps = 0.8;
  auto in = huber(u * (eps * (1 - 1e-9)), eps);
  auto out = huber(u * (eps * (1 + 1e-9)), eps);
  CHECK(std::abs(in.value - out.value) < 1e-8);
  CHECK((in.grad - out.grad).norm() < 1e-8);
}

TEST_CASE("huber bounds the norm") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const Vec x = oracle::uniform_vec(rng, 4, -1, 1) * (t % 7 == 0 ? 0.1 : 1.0);
    const double eps = 0.3;
    const double h = huber(x, eps).value;
    CHECK(h <= x.norm() + 1e-15);
    if (x.norm() >= eps) CHECK(std::abs(x.norm() - h - eps / 2) < 1e-14);
  }
}

TEST_CASE("hoyer ratio values") {
  Vec e = Vec::Zero(7);
  e[3] = 2.5;
  CHECK(hoyer_ratio(e).value == doctest::Approx(1.0));
  CHECK(hoyer_ratio(Vec::Ones(4)).value == doctest::Approx(2.0));
  CHECK_THROWS_AS(hoyer_ratio(Vec::Zero(3)), Error);

  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    Vec x = oracle::uniform_vec(rng, 6, 0, 1);
    if (t % 3 == 0) x[t % 6] = 0;
    const double v = hoyer_ratio(x).value;
    CHECK(v >= 1.0 - 1e-15);
    CHECK(v <= std::sqrt(6.0) + 1e-15);
  }
}

TEST_CASE("hoyer ratio gradient matches finite differences") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Vec x = oracle::uniform_vec(rng, 10, 0.1, 1);
    const Vec fd = oracle::central_difference([](const Vec& z) { return hoyer_ratio(z).value; }, x);
    CHECK(oracle::relative_error(hoyer_ratio(x).grad, fd) < 1e-6);
  }
}

TEST_CASE("difference of l1 and l2") {
  CHECK(diff_l1_l2(Vec::Zero(4), 0.5).value == 0.0);
  Vec x(2);
  x << 3, 4;
  CHECK(diff_l1_l2(x, 1.0).value == doctest::Approx(2.5));

  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    const Vec v = oracle::uniform_vec(rng, 5, 0.1, 1);
    const double eps = 0.2;
    CHECK(std::abs(diff_l1_l2(v, eps).value - (v.sum() - v.norm() + eps / 2)) < 1e-13);
    const Vec fd = oracle::central_difference([&](const Vec& z) { return diff_l1_l2(z, eps).value; }, v);
    CHECK(oracle::relative_error(diff_l1_l2(v, eps).grad, fd) < 1e-6);
    CHECK(diff_l1_l2(v * 0.01, eps).value >= 0.0);
  }
  Vec one = Vec::Zero(4);
  one[2] = 3.0;
  CHECK(diff_l1_l2(one, 0.4).value == doctest::Approx(0.2));
}
