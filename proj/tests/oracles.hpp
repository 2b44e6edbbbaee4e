#pragma once

// Reference computations used only by the tests. None of them call the
// library's projections or solvers.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Vec central_difference(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-6) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + h;
    const double fp = f(xp);
    xp[i] = xi - h;
    const double fm = f(xp);
    xp[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const Vec& a, const Vec& b) {
  return (a - b).norm() / std::max(1.0, std::max(a.norm(), b.norm()));
}

enum class Bound { Equal, AtMost, AtLeast };

// Euclidean projection of v onto {y >= 0 : a^T y (op) r}, a > 0, by enumerating
// every support and both states of the linear constraint. The projection is the
// closest feasible KKT candidate.
inline Vec project_halfspace_orthant(const Vec& v, const Vec& a, double r, Bound op) {
  const Eigen::Index n = v.size();
  Vec best;
  double best_dist = std::numeric_limits<double>::infinity();
  const double tol = 1e-11 * (1.0 + std::abs(r));
  auto feasible = [&](const Vec& y) {
    if ((y.array() < -1e-13).any()) return false;
    const double s = a.dot(y);
    switch (op) {
      case Bound::Equal: return std::abs(s - r) <= tol;
      case Bound::AtMost: return s <= r + tol;
      case Bound::AtLeast: return s >= r - tol;
    }
    return false;
  };
  auto consider = [&](Vec y) {
    y = y.cwiseMax(0.0);
    if (!feasible(y)) return;
    const double dist = (y - v).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = y;
    }
  };
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    Vec y = Vec::Zero(n);
    double av = 0.0, aa = 0.0;
    bool ok = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(mask & (1u << i))) continue;
      av += a[i] * v[i];
      aa += a[i] * a[i];
    }
    // Constraint active: y_S = v_S - theta a_S.
    const double theta = (av - r) / aa;
    for (Eigen::Index i = 0; i < n && ok; ++i)
      if (mask & (1u << i)) {
        y[i] = v[i] - theta * a[i];
        ok = y[i] >= -1e-13;
      }
    if (ok) consider(y);
    // Constraint inactive: y_S = v_S.
    Vec z = Vec::Zero(n);
    ok = true;
    for (Eigen::Index i = 0; i < n && ok; ++i)
      if (mask & (1u << i)) {
        z[i] = v[i];
        ok = v[i] >= 0.0;
      }
    if (ok) consider(z);
  }
  consider(Vec::Zero(n));
  return best;
}

// Projection onto {y >= 0 : a^T y (op) r} by bisection on the multiplier of the
// linear constraint: y(theta) = max(v - theta a, 0).
inline Vec project_halfspace_bisect(const Vec& v, const Vec& a, double r, Bound op) {
  const Vec clipped = v.cwiseMax(0.0);
  const double s = a.dot(clipped);
  if ((op == Bound::AtMost && s <= r) || (op == Bound::AtLeast && s >= r)) return clipped;
  auto sum_at = [&](double theta) { return a.dot((v - theta * a).cwiseMax(0.0)); };
  double lo = -1.0, hi = 1.0;
  while (sum_at(lo) < r) lo *= 2.0;
  while (sum_at(hi) > r) hi *= 2.0;
  for (int k = 0; k < 200 && hi - lo > 1e-17 * (1.0 + std::abs(lo)); ++k) {
    const double mid = 0.5 * (lo + hi);
    (sum_at(mid) > r ? lo : hi) = mid;
  }
  return (v - 0.5 * (lo + hi) * a).cwiseMax(0.0);
}

// Dykstra's alternating projections onto the intersection of two convex sets.
inline Vec dykstra(const Vec& v, const std::function<Vec(const Vec&)>& p1, const std::function<Vec(const Vec&)>& p2,
                   int iters = 2000, double tol = 1e-15) {
  Vec x = v, p = Vec::Zero(v.size()), q = Vec::Zero(v.size());
  for (int k = 0; k < iters; ++k) {
    const Vec y = p1(x + p);
    p = x + p - y;
    const Vec xn = p2(y + q);
    q = y + q - xn;
    const double change = (xn - x).squaredNorm();
    x = xn;
    if (change < tol * tol) break;
  }
  return x;
}

// Projection of z = (x, d) onto {x, d >= 0, sum(x_j) + d_j >= eps_j,
// sum_j d_j / eps_j <= budget}, groups given by consecutive offsets.
// Dykstra's alternating projections between the floors and the budget.
inline Vec project_ratio_set_dykstra(const std::vector<Eigen::Index>& offsets, const Vec& eps, double budget,
                                     const Vec& z) {
  const Eigen::Index m = static_cast<Eigen::Index>(offsets.size()) - 1, n = offsets.back();
  auto floors = [&](const Vec& v) {
    Vec out = v;
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::Index b = offsets[static_cast<size_t>(j)], s = offsets[static_cast<size_t>(j) + 1] - b;
      Vec st(s + 1);
      st << v.segment(b, s), v[n + j];
      const Vec p = project_halfspace_bisect(st, Vec::Ones(s + 1), eps[j], Bound::AtLeast);
      out.segment(b, s) = p.head(s);
      out[n + j] = p[s];
    }
    return out;
  };
  auto dummies = [&](const Vec& v) {
    Vec out = v;
    out.tail(m) = project_halfspace_bisect(v.tail(m), eps.cwiseInverse(), budget, Bound::AtMost);
    return out;
  };
  return dykstra(z, floors, dummies, 5000, 1e-14);
}

// Same projection by bisection on the budget multiplier mu: for fixed mu the
// problem separates into floor projections of (x_j, d_j - mu / eps_j), and
// sum_j d_j(mu) / eps_j is non-increasing in mu.
inline Vec project_ratio_set(const std::vector<Eigen::Index>& offsets, const Vec& eps, double budget, const Vec& z) {
  const Eigen::Index m = static_cast<Eigen::Index>(offsets.size()) - 1, n = offsets.back();
  auto at = [&](double mu) {
    Vec out(n + m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::Index b = offsets[static_cast<size_t>(j)], s = offsets[static_cast<size_t>(j) + 1] - b;
      Vec st(s + 1);
      st << z.segment(b, s), z[n + j] - mu / eps[j];
      const Vec p = project_halfspace_bisect(st, Vec::Ones(s + 1), eps[j], Bound::AtLeast);
      out.segment(b, s) = p.head(s);
      out[n + j] = p[s];
    }
    return out;
  };
  auto used = [&](const Vec& v) { return v.tail(m).cwiseQuotient(eps).sum(); };
  Vec p = at(0.0);
  if (used(p) <= budget) return p;
  double lo = 0.0, hi = 1.0;
  while (used(at(hi)) > budget) hi *= 2.0;
  for (int k = 0; k < 200 && hi - lo > 1e-16 * (1.0 + hi); ++k) {
    const double mid = 0.5 * (lo + hi);
    (used(at(mid)) > budget ? lo : hi) = mid;
  }
  return at(hi);
}

// Accelerated projected gradient for min 1/2 z^T H z + c^T z over a convex set
// given by its projection. Runs until z is a fixed point of the plain
// projected gradient map.
inline Vec projected_gradient(const Mat& h, const Vec& c, const Vec& z0, const std::function<Vec(const Vec&)>& proj,
                              int max_iters = 200000, double tol = 1e-14) {
  Eigen::SelfAdjointEigenSolver<Mat> es(h, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = std::max(es.eigenvalues().minCoeff(), 0.0);
  const double step = 1.0 / lmax;
  const double q = lmin / lmax;
  const double beta = (1.0 - std::sqrt(q)) / (1.0 + std::sqrt(q));
  Vec z = proj(z0), zprev = z;
  for (int k = 0; k < max_iters; ++k) {
    const Vec w = z + beta * (z - zprev);
    const Vec zn = proj(w - step * (h * w + c));
    zprev = z;
    z = zn;
    if ((z - zprev).norm() <= tol * (1.0 + z.norm()) &&
        (proj(z - step * (h * z + c)) - z).norm() <= tol * (1.0 + z.norm()))
      break;
  }
  return z;
}

// min 1/2 ||Ax - b||^2 over x >= 0 by enumerating supports (small N only).
inline Vec nnls_enumerate(const Mat& a, const Vec& b) {
  const Eigen::Index n = a.cols();
  Vec best = Vec::Zero(n);
  double best_val = 0.5 * b.squaredNorm();
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<Eigen::Index> s;
    for (Eigen::Index i = 0; i < n; ++i)
      if (mask & (1u << i)) s.push_back(i);
    Mat as(a.rows(), static_cast<Eigen::Index>(s.size()));
    for (size_t k = 0; k < s.size(); ++k) as.col(static_cast<Eigen::Index>(k)) = a.col(s[k]);
    const Vec xs = as.completeOrthogonalDecomposition().solve(b);
    if ((xs.array() < 0.0).any()) continue;
    Vec x = Vec::Zero(n);
    for (size_t k = 0; k < s.size(); ++k) x[s[k]] = xs[static_cast<Eigen::Index>(k)];
    const double val = 0.5 * (a * x - b).squaredNorm();
    if (val < best_val - 1e-15) {
      best_val = val;
      best = x;
    }
  }
  return best;
}

// min sum(x) over x >= 0 with ||Ax - b|| <= tau, by enumerating supports. On a
// support S with the ball active, x_S = (A_S^T A_S)^{-1}(A_S^T b - lambda 1)
// and lambda solves ||A_S x_S - b|| = tau.
inline Vec l1_ball_enumerate(const Mat& a, const Vec& b, double tau) {
  const Eigen::Index n = a.cols();
  if (b.norm() <= tau) return Vec::Zero(n);
  Vec best;
  double best_l1 = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<Eigen::Index> s;
    for (Eigen::Index i = 0; i < n; ++i)
      if (mask & (1u << i)) s.push_back(i);
    const auto k = static_cast<Eigen::Index>(s.size());
    Mat as(a.rows(), k);
    for (Eigen::Index j = 0; j < k; ++j) as.col(j) = a.col(s[static_cast<size_t>(j)]);
    const Mat g = as.transpose() * as;
    Eigen::LDLT<Mat> ldlt(g);
    if (ldlt.rcond() < 1e-12) continue;
    const Vec x0 = ldlt.solve(as.transpose() * b);
    const Vec u = -ldlt.solve(Vec::Ones(k));
    const Vec r0 = as * x0 - b, ru = as * u;
    // ||r0 + lambda ru||^2 = tau^2, smallest non-negative root.
    const double qa = ru.squaredNorm(), qb = 2.0 * r0.dot(ru), qc = r0.squaredNorm() - tau * tau;
    if (qa <= 0.0) continue;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc < 0.0) continue;
    for (double lambda : {(-qb - std::sqrt(disc)) / (2.0 * qa), (-qb + std::sqrt(disc)) / (2.0 * qa)}) {
      if (lambda < 0.0) continue;
      const Vec xs = x0 + lambda * u;
      if ((xs.array() < -1e-12).any()) continue;
      Vec x = Vec::Zero(n);
      for (Eigen::Index j = 0; j < k; ++j) x[s[static_cast<size_t>(j)]] = std::max(0.0, xs[j]);
      if ((a * x - b).norm() > tau * (1.0 + 1e-9)) continue;
      if (x.sum() < best_l1) {
        best_l1 = x.sum();
        best = x;
      }
    }
  }
  return best;
}

inline Vec uniform_vec(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline Mat gaussian_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g;
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = g(rng);
  return m;
}

inline Mat unit_columns(Mat m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) m.col(j) /= m.col(j).norm();
  return m;
}

}  // namespace oracle
