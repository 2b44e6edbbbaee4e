#pragma once

#include <optional>

#include "ssnls/core.hpp"

namespace ssnls {

/// Simplex {y >= 0 : sum_i y_i / beta_i (op) radius}. Without weights every
/// beta_i is 1.
struct SimplexSpec {
  double radius = 1.0;
  std::optional<Vec> weights;  // beta, strictly positive

  void validate(Index n) const;
};

enum class SimplexMode { Equality, UpperBound, LowerBound };

Vec project_nonneg(const VecRef& v);

/// Euclidean projection onto a (weighted) simplex, its sub-level or its
/// super-level set. Sort-and-threshold, O(n log n); ties are broken by index.
Vec project_simplex(const VecRef& v, const SimplexSpec& spec, SimplexMode mode);

struct FloorPoint {
  Vec x;
  double d = 0.0;
};

/// Projection of (x_j, d_j) onto {x_j >= 0, d_j >= 0, sum(x_j) + d_j >= eps}.
FloorPoint project_group_floor(const VecRef& xj, double dj, double eps);

/// Projection onto {d >= 0, sum_j d_j / beta_j <= budget}.
Vec project_dummy_budget(const VecRef& d, const VecRef& beta, double budget);

}  // namespace ssnls
