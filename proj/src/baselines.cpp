#include "ssnls/baselines.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ssnls {

namespace {

std::vector<Index> members(const std::vector<bool>& passive) {
  std::vector<Index> idx;
  for (size_t i = 0; i < passive.size(); ++i)
    if (passive[i]) idx.push_back(static_cast<Index>(i));
  return idx;
}

// Lawson-Hanson iteration. `descent(x)` is the negative gradient, `solve(P)`
// the unconstrained minimizer restricted to the passive set P (zeros elsewhere).
// Coordinates flagged in `free` stay passive and carry no sign constraint.
template <class Descent, class Solve>
Vec active_set(Index n, const std::vector<bool>& free, Descent descent, Solve solve, double tol,
               int max_iters) {
  std::vector<bool> passive = free;
  if (passive.empty()) passive.assign(static_cast<size_t>(n), false);
  auto is_free = [&](Index i) { return !free.empty() && free[static_cast<size_t>(i)]; };

  Vec x = Vec::Zero(n);
  if (std::any_of(passive.begin(), passive.end(), [](bool p) { return p; })) x = solve(members(passive));

  std::vector<bool> blocked(static_cast<size_t>(n), false);
  int iters = 0;
  while (true) {
    const Vec w = descent(x);
    Index t = -1;
    double best = tol;
    for (Index i = 0; i < n; ++i) {
      if (passive[static_cast<size_t>(i)] || blocked[static_cast<size_t>(i)]) continue;
      if (w(i) > best) {
        best = w(i);
        t = i;
      }
    }
    if (t < 0) break;
    if (++iters > max_iters)
      fail(ErrorKind::NonConvergence, "active-set iteration cap reached (" + std::to_string(max_iters) + ")");

    passive[static_cast<size_t>(t)] = true;
    bool first = true;
    while (true) {
      const Vec z = solve(members(passive));
      if (first && z(t) <= 0.0) {
        // Rounding made the entering coordinate useless; skip it this round.
        passive[static_cast<size_t>(t)] = false;
        blocked[static_cast<size_t>(t)] = true;
        break;
      }
      first = false;
      double alpha = 1.0;
      Index hit = -1;
      for (Index i = 0; i < n; ++i) {
        if (!passive[static_cast<size_t>(i)] || is_free(i) || z(i) > 0.0) continue;
        const double a = x(i) / (x(i) - z(i));
        if (a < alpha) {
          alpha = a;
          hit = i;
        }
      }
      if (hit < 0) {
        x = z;
        std::fill(blocked.begin(), blocked.end(), false);
        break;
      }
      x += alpha * (z - x);
      x(hit) = 0.0;
      for (Index i = 0; i < n; ++i)
        if (passive[static_cast<size_t>(i)] && !is_free(i) && x(i) <= 0.0) {
          passive[static_cast<size_t>(i)] = false;
          x(i) = 0.0;
        }
      if (++iters > max_iters)
        fail(ErrorKind::NonConvergence, "active-set iteration cap reached (" + std::to_string(max_iters) + ")");
    }
  }
  return x;
}

Vec nonneg_qp_masked(const Mat& gram, const Vec& h, const std::vector<bool>& free,
                     const ActiveSetParams& params) {
  const Index n = gram.rows();
  require(gram.cols() == n && h.size() == n, ErrorKind::Shape, "nonneg_qp: shape mismatch");
  const double tol = params.tol > 0.0 ? params.tol : 1e-12 * std::max(1.0, h.cwiseAbs().maxCoeff());
  const int cap = params.max_iters > 0 ? params.max_iters : static_cast<int>(10 * n + 100);
  auto descent = [&](const Vec& x) -> Vec { return h - gram * x; };
  auto solve = [&](const std::vector<Index>& p) -> Vec {
    const Index k = static_cast<Index>(p.size());
    Mat gp(k, k);
    Vec hp(k);
    for (Index r = 0; r < k; ++r) {
      hp(r) = h(p[static_cast<size_t>(r)]);
      for (Index c = 0; c < k; ++c) gp(r, c) = gram(p[static_cast<size_t>(r)], p[static_cast<size_t>(c)]);
    }
    const Vec zp = gp.completeOrthogonalDecomposition().solve(hp);
    Vec z = Vec::Zero(n);
    for (Index r = 0; r < k; ++r) z(p[static_cast<size_t>(r)]) = zp(r);
    return z;
  };
  return active_set(n, free, descent, solve, tol, cap);
}

}  // namespace

Vec nnls(const Mat& a, const Vec& b, const ActiveSetParams& params) {
  require(a.rows() == b.size(), ErrorKind::Shape, "nnls: rows of A must match b");
  require(a.allFinite() && b.allFinite(), ErrorKind::Domain, "nnls: non-finite input");
  const Index n = a.cols();
  const Vec atb = a.transpose() * b;
  const double tol = params.tol > 0.0 ? params.tol : 1e-12 * std::max(1.0, atb.cwiseAbs().maxCoeff());
  const int cap = params.max_iters > 0 ? params.max_iters : static_cast<int>(3 * n + 100);
  auto descent = [&](const Vec& x) -> Vec { return a.transpose() * (b - a * x); };
  auto solve = [&](const std::vector<Index>& p) -> Vec {
    Mat ap(a.rows(), static_cast<Index>(p.size()));
    for (size_t c = 0; c < p.size(); ++c) ap.col(static_cast<Index>(c)) = a.col(p[c]);
    const Vec zp = ap.colPivHouseholderQr().solve(b);
    Vec z = Vec::Zero(n);
    for (size_t c = 0; c < p.size(); ++c) z(p[c]) = zp(static_cast<Index>(c));
    return z;
  };
  return active_set(n, {}, descent, solve, tol, cap);
}

Vec nonneg_qp(const Mat& gram, const Vec& h, const ActiveSetParams& params,
              const std::vector<bool>& free) {
  require(free.empty() || static_cast<Index>(free.size()) == h.size(), ErrorKind::Shape,
          "nonneg_qp: free mask length mismatch");
  return nonneg_qp_masked(gram, h, free, params);
}

Vec l1_penalized(const Mat& a, const Vec& b, const Vec& gamma) {
  require(a.rows() == b.size() && gamma.size() == a.cols(), ErrorKind::Shape,
          "l1_penalized: shape mismatch");
  require((gamma.array() >= 0.0).all(), ErrorKind::Config, "l1 weights must be non-negative");
  return nonneg_qp(a.transpose() * a, a.transpose() * b - gamma);
}

Vec least_squares_min_norm(const Mat& a, const Vec& b) {
  require(a.rows() == b.size(), ErrorKind::Shape, "least squares: rows of A must match b");
  return a.completeOrthogonalDecomposition().solve(b);
}

BregmanResult l1_bregman(const Mat& a, const Vec& b, double tau, const BregmanParams& params) {
  require(a.rows() == b.size(), ErrorKind::Shape, "l1_bregman: rows of A must match b");
  require(tau > 0.0, ErrorKind::Config, "l1_bregman: tau must be positive");
  const Index n = a.cols();
  const double limit = tau * (1.0 + params.feasibility_slack);

  BregmanResult out;
  out.x = Vec::Zero(n);
  const double b_norm = b.norm();
  out.residual_trace.push_back(b_norm);
  if (b_norm <= tau) return out;

  const Mat gram = a.transpose() * a;
  const Vec atb = a.transpose() * b;
  const double lambda = atb.maxCoeff();
  require(lambda > 0.0, ErrorKind::Domain, "l1_bregman: no non-negative point reduces the residual");
  const Vec ones = Vec::Ones(n);
  auto penalized = [&](const Vec& data_corr, double weight) {
    return nonneg_qp(gram, data_corr - weight * ones);
  };

  // Bregman add-back with a fixed weight. Progress along small singular
  // directions is slow, so the loop also ends when the residual stalls.
  Vec corr = atb;
  Vec x = Vec::Zero(n);
  double prev = b_norm;
  bool reached = false;
  for (int k = 0; k < params.max_outer; ++k) {
    x = penalized(corr, lambda);
    const Vec r = b - a * x;
    const double res = r.norm();
    out.residual_trace.push_back(res);
    ++out.outer_iters;
    if (res <= limit) {
      reached = true;
      break;
    }
    if (k > 0 && res >= prev * (1.0 - params.stall_ratio)) break;
    prev = res;
    corr += a.transpose() * r;
  }

  // Root find on the weight for the original data: the residual is
  // non-decreasing in the weight and zero weight gives the NNLS residual.
  Vec best = x;
  double best_l1 = reached ? x.sum() : std::numeric_limits<double>::infinity();
  double lo = 0.0;
  double hi = lambda;
  if (!reached) {
    const Vec x0 = penalized(atb, 0.0);
    const double res0 = (b - a * x0).norm();
    if (res0 > limit) {
      std::string trace;
      for (double r : out.residual_trace) trace += " " + std::to_string(r);
      fail(ErrorKind::NonConvergence, "l1_bregman: tau is below the NNLS residual " + std::to_string(res0) +
                                          "; residual trace:" + trace);
    }
    best = x0;
    best_l1 = x0.sum();
  }
  for (int it = 0; it < params.bisection_steps && hi - lo > 1e-15 * lambda; ++it) {
    const double mid = 0.5 * (lo + hi);
    const Vec xm = penalized(atb, mid);
    const double res = (b - a * xm).norm();
    if (res <= limit) {
      lo = mid;
      if (xm.sum() <= best_l1) {
        best = xm;
        best_l1 = xm.sum();
      }
      if (res >= tau) break;
    } else {
      hi = mid;
    }
  }
  out.x = best;
  return out;
}

void PdParams::validate() const {
  require(rho0 > 0.0, ErrorKind::Config, "penalty decomposition: rho0 must be positive");
  require(sigma_growth > 1.0, ErrorKind::Config, "penalty decomposition: growth factor must exceed 1");
  require(tol_inner > 0.0 && tol_outer > 0.0, ErrorKind::Config,
          "penalty decomposition: tolerances must be positive");
  require(max_inner >= 1 && max_outer >= 1, ErrorKind::Config,
          "penalty decomposition: iteration caps must be positive");
}

PdResult penalty_decomposition_l0(const GroupedDictionary& dict, const Vec& b, const PdParams& params) {
  params.validate();
  require(b.size() == dict.rows(), ErrorKind::Shape, "data length does not match dictionary rows");
  const GroupLayout& layout = dict.layout();
  const Mat& a = dict.entries();
  const Index n = a.cols();

  std::vector<bool> free(static_cast<size_t>(n), false);
  for (Index j = 0; j < layout.num_groups(); ++j)
    if (layout.is_free(j))
      for (Index i = layout.begin(j); i < layout.begin(j) + layout.size(j); ++i) free[static_cast<size_t>(i)] = true;

  const Mat gram = a.transpose() * a;
  const Vec atb = a.transpose() * b;
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram);
  const Mat& v = eig.eigenvectors();
  const Vec lam = eig.eigenvalues().cwiseMax(0.0);

  Vec y;
  switch (params.init) {
    case PdInit::Zero: y = Vec::Zero(n); break;
    case PdInit::LeastSquares: y = least_squares_min_norm(a, b); break;
    case PdInit::Nnls: y = nonneg_qp_masked(gram, atb, free, {}); break;
  }

  auto threshold = [&](const Vec& x) {
    Vec out = Vec::Zero(n);
    for (Index j = 0; j < layout.num_groups(); ++j) {
      const Index beg = layout.begin(j);
      const Index m = layout.size(j);
      if (layout.is_free(j)) {
        out.segment(beg, m) = x.segment(beg, m);
        continue;
      }
      Index arg = 0;
      for (Index l = 1; l < m; ++l)
        if (x(beg + l) > x(beg + arg)) arg = l;
      out(beg + arg) = std::max(x(beg + arg), 0.0);
    }
    return out;
  };

  PdResult res;
  double rho = params.rho0;
  Vec x = y;
  while (true) {
    if (res.outer_iters >= params.max_outer)
      fail(ErrorKind::NonConvergence, "penalty decomposition: outer iteration cap reached");
    ++res.outer_iters;
    const Vec inv = (lam.array() + rho).inverse().matrix();
    for (int i = 0; i < params.max_inner; ++i) {
      const Vec x_new = v * inv.cwiseProduct(v.transpose() * (atb + rho * y));
      const Vec y_new = threshold(x_new);
      const double change = std::max((x_new - x).cwiseAbs().maxCoeff(), (y_new - y).cwiseAbs().maxCoeff());
      x = x_new;
      y = y_new;
      ++res.inner_iters_total;
      if (change <= params.tol_inner) break;
    }
    if ((x - y).cwiseAbs().maxCoeff() <= params.tol_outer) break;
    rho *= params.sigma_growth;
  }
  res.coeffs.x = y;
  return res;
}

}  // namespace ssnls
