#include "ssnls/prox.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace ssnls {

void SimplexSpec::validate(Index n) const {
  require(radius > 0.0, ErrorKind::Config, "simplex radius must be positive");
  if (weights) {
    require(weights->size() == n, ErrorKind::Shape, "simplex weights length mismatch");
    require((weights->array() > 0.0).all(), ErrorKind::Config, "simplex weights must be positive");
  }
}

Vec project_nonneg(const VecRef& v) { return v.cwiseMax(0.0); }

namespace {

// Projection onto {y >= 0, sum_i w_i y_i = r} with w_i = 1 / beta_i.
// Solution: y_i = max(v_i - theta w_i, 0), theta the root of
// sum_i w_i max(v_i - theta w_i, 0) = r, found over sorted breakpoints v_i / w_i.
Vec project_weighted_simplex_eq(const VecRef& v, const Vec& w, double radius) {
  const Index n = v.size();
  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return v(a) / w(a) > v(b) / w(b);
  });

  double cum_wv = 0.0;
  double cum_ww = 0.0;
  double theta = 0.0;
  for (Index k = 0; k < n; ++k) {
    const Index i = order[static_cast<size_t>(k)];
    cum_wv += w(i) * v(i);
    cum_ww += w(i) * w(i);
    const double candidate = (cum_wv - radius) / cum_ww;
    if (v(i) / w(i) > candidate) {
      theta = candidate;
    } else {
      break;
    }
  }
  return (v - theta * w).cwiseMax(0.0);
}

}  // namespace

Vec project_simplex(const VecRef& v, const SimplexSpec& spec, SimplexMode mode) {
  spec.validate(v.size());
  const Vec w = spec.weights ? Vec(spec.weights->cwiseInverse()) : Vec(Vec::Ones(v.size()));
  if (mode != SimplexMode::Equality) {
    Vec clipped = project_nonneg(v);
    const double level = w.dot(clipped);
    if ((mode == SimplexMode::UpperBound && level <= spec.radius) ||
        (mode == SimplexMode::LowerBound && level >= spec.radius))
      return clipped;
  }
  return project_weighted_simplex_eq(v, w, spec.radius);
}

FloorPoint project_group_floor(const VecRef& xj, double dj, double eps) {
  require(eps > 0.0, ErrorKind::Config, "group floor eps must be positive");
  const Index m = xj.size();
  Vec stacked(m + 1);
  stacked << xj, dj;
  const Vec p = project_simplex(stacked, SimplexSpec{eps, std::nullopt}, SimplexMode::LowerBound);
  return FloorPoint{p.head(m), p(m)};
}

Vec project_dummy_budget(const VecRef& d, const VecRef& beta, double budget) {
  require(budget >= 0.0, ErrorKind::Config, "dummy budget M - r must be non-negative");
  require(beta.size() == d.size(), ErrorKind::Shape, "beta length mismatch");
  require((beta.array() > 0.0).all(), ErrorKind::Config, "beta weights must be positive");
  if (budget == 0.0) return Vec::Zero(d.size());
  return project_simplex(d, SimplexSpec{budget, Vec(beta)}, SimplexMode::UpperBound);
}

}  // namespace ssnls
