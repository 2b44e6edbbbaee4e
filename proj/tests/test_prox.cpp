#include <doctest.h>

#include "oracles.hpp"
#include "ssnls/prox.hpp"

using namespace ssnls;

namespace {

Vec stack(const FloorPoint& p) {
  Vec v(p.x.size() + 1);
  v << p.x, p.d;
  return v;
}

Vec floor_stacked(const Vec& v, double eps) {
  return stack(project_group_floor(v.head(v.size() - 1), v[v.size() - 1], eps));
}

oracle::Bound bound_of(SimplexMode m) {
  switch (m) {
    case SimplexMode::Equality: return oracle::Bound::Equal;
    case SimplexMode::UpperBound: return oracle::Bound::AtMost;
    case SimplexMode::LowerBound: return oracle::Bound::AtLeast;
  }
  return oracle::Bound::Equal;
}

}  // namespace

TEST_CASE("nonnegative orthant") {
  Vec v(3);
  v << 1, -2, 0.5;
  Vec e(3);
  e << 1, 0, 0.5;
  CHECK(project_nonneg(v) == e);
  CHECK(project_nonneg(e) == e);

  // Grid search over a 2-D box.
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const Vec p = oracle::uniform_vec(rng, 2, -1, 1);
    const Vec y = project_nonneg(p);
    double best = 1e9;
    for (int i = 0; i <= 200; ++i)
      for (int j = 0; j <= 200; ++j) best = std::min(best, (Eigen::Vector2d(i / 100.0, j / 100.0) - Eigen::Vector2d(p)).norm());
    CHECK((y - p).norm() <= best + 1e-12);
  }
}

TEST_CASE("simplex examples") {
  Vec v(2);
  v << 2, 0;
  Vec p = project_simplex(v, SimplexSpec{1.0, std::nullopt}, SimplexMode::Equality);
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] == doctest::Approx(0.0));
  v << 0.2, 0.1;
  CHECK(project_simplex(v, SimplexSpec{1.0, std::nullopt}, SimplexMode::UpperBound) == v);
}

TEST_CASE("simplex matches the support-enumeration oracle") {
  std::mt19937_64 rng(2);
  for (auto mode : {SimplexMode::Equality, SimplexMode::UpperBound, SimplexMode::LowerBound}) {
    for (int t = 0; t < 200; ++t) {
      const Index n = 1 + t % 8;
      const Vec v = oracle::uniform_vec(rng, n, -1, 2);
      SimplexSpec spec{oracle::uniform_vec(rng, 1, 0.1, 3)[0], std::nullopt};
      Vec a = Vec::Ones(n);
      if (t % 2) {
        spec.weights = oracle::uniform_vec(rng, n, 0.2, 3);
        a = spec.weights->cwiseInverse();
      }
      const Vec got = project_simplex(v, spec, mode);
      const Vec want = oracle::project_halfspace_orthant(v, a, spec.radius, bound_of(mode));
      CHECK((got - want).norm() < 1e-7);
    }
  }
}

TEST_CASE("group floor examples") {
  auto p = project_group_floor(Vec::Constant(1, 0.5), 0.2, 0.05);
  CHECK(p.x[0] == 0.5);
  CHECK(p.d == 0.2);
  auto q = project_group_floor(Vec::Zero(1), 0.0, 0.05);
  CHECK(q.x[0] == doctest::Approx(0.025));
  CHECK(q.d == doctest::Approx(0.025));
}

TEST_CASE("group floor matches the oracle") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const Index n = 1 + t % 9;
    const Vec v = oracle::uniform_vec(rng, n + 1, -0.3, 0.3);
    const double eps = oracle::uniform_vec(rng, 1, 0.01, 0.5)[0];
    const Vec want = oracle::project_halfspace_orthant(v, Vec::Ones(n + 1), eps, oracle::Bound::AtLeast);
    CHECK((floor_stacked(v, eps) - want).norm() < 1e-7);
  }
}

TEST_CASE("dummy budget") {
  CHECK(project_dummy_budget(Vec::Zero(3), Vec::Ones(3), 1.0).isZero());
  Vec d(2);
  d << 1, 1;
  const Vec p = project_dummy_budget(d, Vec::Ones(2), 1.0);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(project_dummy_budget(d, Vec::Ones(2), -1.0), Error);

  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    const Index m = 1 + t % 10;
    const Vec v = oracle::uniform_vec(rng, m, -1, 2);
    const Vec beta = oracle::uniform_vec(rng, m, 0.1, 4);
    const double budget = double(t % 4);
    const Vec want = oracle::project_halfspace_orthant(v, beta.cwiseInverse(), budget, oracle::Bound::AtMost);
    CHECK((project_dummy_budget(v, beta, budget) - want).norm() < 1e-7);
  }
}

TEST_CASE("projection properties") {
  std::mt19937_64 rng(5);
  const Index n = 6;
  const Vec beta = oracle::uniform_vec(rng, n, 0.3, 2);
  const std::vector<std::function<Vec(const Vec&)>> projections = {
      [](const Vec& v) { return project_nonneg(v); },
      [](const Vec& v) { return project_simplex(v, SimplexSpec{1.3, std::nullopt}, SimplexMode::Equality); },
      [](const Vec& v) { return project_simplex(v, SimplexSpec{1.3, std::nullopt}, SimplexMode::UpperBound); },
      [&](const Vec& v) { return project_simplex(v, SimplexSpec{0.7, beta}, SimplexMode::LowerBound); },
      [](const Vec& v) { return floor_stacked(v, 0.2); },
      [&](const Vec& v) { return project_dummy_budget(v, beta, 2.0); },
  };
  const std::vector<std::function<bool(const Vec&)>> feasible = {
      [](const Vec& y) { return (y.array() >= 0).all(); },
      [](const Vec& y) { return (y.array() >= 0).all() && std::abs(y.sum() - 1.3) < 1e-10; },
      [](const Vec& y) { return (y.array() >= 0).all() && y.sum() <= 1.3 + 1e-10; },
      [&](const Vec& y) { return (y.array() >= 0).all() && y.cwiseQuotient(beta).sum() >= 0.7 - 1e-10; },
      [](const Vec& y) { return (y.array() >= 0).all() && y.sum() >= 0.2 - 1e-10; },
      [&](const Vec& y) { return (y.array() >= 0).all() && y.cwiseQuotient(beta).sum() <= 2.0 + 1e-10; },
  };
  for (size_t k = 0; k < projections.size(); ++k) {
    const auto& p = projections[k];
    for (int t = 0; t < 100; ++t) {
      const Vec u = oracle::uniform_vec(rng, n, -1, 1.5), v = oracle::uniform_vec(rng, n, -1, 1.5);
      const Vec pu = p(u), pv = p(v);
      CHECK((p(pu) - pu).norm() < 1e-12);
      CHECK((pu - pv).norm() <= (u - v).norm() + 1e-10);
      CHECK(feasible[k](pu));
      if (t < 5) {
        // Optimality against feasible points produced by projecting random vectors.
        int worse = 0;
        for (int s = 0; s < 1000; ++s) {
          const Vec y = p(oracle::uniform_vec(rng, n, -1, 3));
          if ((pu - u).norm() > (y - u).norm() + 1e-12) ++worse;
        }
        CHECK(worse == 0);
      }
    }
  }
}
